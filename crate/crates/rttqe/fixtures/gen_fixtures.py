#!/usr/bin/env python3
"""Regenerates the offline fixtures under this directory.

    python3 gen_fixtures.py

Writes `run/` (a 5-system en-de round-trip run with human judgments) and
`paws/` (200 synthetic paraphrase pairs). Embeddings come from a small
concept encoder: every word maps to a concept vector shared with its
synonyms and its German gloss, and words before the main verb are bound to
an agent role, words after it to a patient role. The encoder never sees
labels. Output is byte-stable across runs.
"""

import csv
import hashlib
import json
import random
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
DIM = 24

# (english variants..., german gloss per variant); variants share a concept.
NOUNS = [
    (("doctor", "physician"), ("arzt", "mediziner")),
    (("lawyer", "attorney"), ("anwalt", "jurist")),
    (("teacher", "instructor"), ("lehrer", "dozent")),
    (("child", "kid"), ("kind", "knirps")),
    (("student", "pupil"), ("student", "schüler")),
    (("manager", "boss"), ("manager", "chef")),
    (("friend", "pal"), ("freund", "kumpel")),
    (("customer", "client"), ("kunde", "klient")),
    (("officer", "policeman"), ("beamter", "polizist")),
    (("neighbour", "neighbor"), ("nachbar", "anwohner")),
]
OBJECTS = [
    (("car", "automobile"), ("auto", "wagen")),
    (("film", "movie"), ("film", "streifen")),
    (("house", "home"), ("haus", "heim")),
    (("shop", "store"), ("laden", "geschäft")),
    (("book", "novel"), ("buch", "roman")),
    (("phone", "smartphone"), ("telefon", "handy")),
    (("bike", "bicycle"), ("rad", "fahrrad")),
    (("laptop", "notebook"), ("laptop", "klapprechner")),
]
PERSON_VERBS = [
    (("help", "assist"), ("helfen", "unterstützen")),
    (("hire", "employ"), ("einstellen", "beschäftigen")),
    (("trust", "believe"), ("vertrauen", "glauben")),
    (("beat", "defeat"), ("schlagen", "besiegen")),
    (("visit", "see"), ("besuchen", "sehen")),
    (("pay", "compensate"), ("bezahlen", "entlohnen")),
    (("teach", "instruct"), ("unterrichten", "anleiten")),
    (("sue", "prosecute"), ("verklagen", "belangen")),
    (("follow", "track"), ("folgen", "verfolgen")),
]
OBJECT_VERBS = [
    (("buy", "purchase"), ("kaufen", "erwerben")),
    (("sell",), ("verkaufen",)),
    (("rent", "lease"), ("mieten", "pachten")),
    (("fix", "repair"), ("reparieren", "ausbessern")),
    (("recommend", "suggest"), ("empfehlen", "vorschlagen")),
    (("choose", "pick"), ("wählen", "aussuchen")),
    (("steal",), ("stehlen",)),
]
ADJECTIVES = [
    (("big", "large"), ("groß", "riesig")),
    (("small", "little"), ("klein", "winzig")),
    (("cheap", "inexpensive"), ("billig", "günstig")),
    (("new", "modern"), ("neu", "modern")),
    (("old", "used"), ("alt", "gebraucht")),
    (("red",), ("rot",)),
    (("blue",), ("blau",)),
    (("fast", "quick"), ("schnell", "rasch")),
    (("expensive", "costly"), ("teuer", "kostspielig")),
]
PLACES = ["london", "berlin", "paris", "tokyo", "boston", "madrid"]
FUNCTION = {
    "a": "ein", "the": "der", "why": "warum", "would": "würde", "can": "kann",
    "how": "wie", "does": "tut", "do": "tun", "is": "ist", "it": "es",
    "normal": "normal", "for": "für", "to": "zu", "in": "in", "and": "und",
    "i": "ich", "should": "sollte", "what": "was", "happens": "passiert",
    "when": "wenn", "or": "oder", "ever": "je", "never": "nie", "?": "?",
    ".": ".", "my": "mein", "often": "oft", "there": "dort", "will": "wird",
}
# Drawn when a system mistranslates a content word.
DISTRACTORS = ["weather", "river", "music", "dinner", "window", "garden", "idea"]

VERBS = {w for group, _ in PERSON_VERBS + OBJECT_VERBS for w in group}
VERBS |= {g for _, gs in PERSON_VERBS + OBJECT_VERBS for g in gs}

CONCEPT = {}  # word -> concept name
GLOSS = {}
for table in (NOUNS, OBJECTS, PERSON_VERBS, OBJECT_VERBS, ADJECTIVES):
    for en, de in table:
        for e, d in zip(en, de):
            CONCEPT[e] = CONCEPT[d] = en[0]
            GLOSS[e] = d
for en, de in FUNCTION.items():
    CONCEPT[en] = CONCEPT[de] = "fn:" + en
    GLOSS[en] = de
for w in PLACES + DISTRACTORS:
    CONCEPT[w] = w
    GLOSS[w] = w


def seeded(name):
    seed = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
    return np.random.RandomState(seed)


def unit(v):
    return v / np.linalg.norm(v)


def concept_vec(name):
    return unit(seeded("concept:" + name).randn(DIM))


def word_vec(word):
    """Synonyms share most of their direction but not all of it."""
    concept = CONCEPT.get(word, "oov:" + word)
    own = concept_vec("word:" + word)
    base = concept_vec(concept)
    if concept.startswith("fn:"):
        return 0.3 * base
    return unit(base + 0.35 * own)


ROLE_AGENT = np.sign(seeded("role:agent").randn(DIM))
ROLE_PATIENT = np.sign(seeded("role:patient").randn(DIM))
CLS = concept_vec("[CLS]")
SEP = concept_vec("[SEP]")


def words(text):
    return text.lower().split()


def roles(ws):
    verb = next((i for i, w in enumerate(ws) if w in VERBS), len(ws))
    return [ROLE_AGENT if i < verb else ROLE_PATIENT for i in range(len(ws))]


def word_pieces(word):
    if len(word) > 7:
        return [word[:5], "##" + word[5:]]
    return [word]


def encode(text):
    ws = words(text)
    rs = roles(ws)
    vs = [word_vec(w) for w in ws]
    bound = [v + 0.9 * v * r for v, r in zip(vs, rs)]
    ctx = np.mean(vs, axis=0)
    jitter = 0.04 * seeded("noise:" + text).randn(DIM)
    sentence = unit(np.sum(bound, axis=0) + jitter)
    pieces, tokens = ["[CLS]"], [CLS + 0.4 * ctx]
    for w, b in zip(ws, bound):
        for j, p in enumerate(word_pieces(w)):
            pieces.append(p)
            tokens.append(b + 0.25 * ctx + 0.05 * j * concept_vec("piece:" + p))
    pieces.append("[SEP]")
    tokens.append(SEP + 0.2 * ctx)
    return {
        "text": text,
        "sentence_vector": [float(x) for x in sentence],
        "wordpieces": pieces,
        "token_vectors": [[float(x) for x in t] for t in tokens],
    }


def write_embeddings(path, texts):
    header = {"encoder": "concept-proxy", "dim": DIM, "layer": None}
    lines = [json.dumps(header)]
    lines += [json.dumps(encode(t), ensure_ascii=False) for t in sorted(set(texts))]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_lines(path, lines):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def syn(rng, group):
    return rng.choice(group[0])


def other_variant(word, table):
    for en, _ in table:
        if word in en and len(en) > 1:
            return en[1] if en[0] == word else en[0]
    return word


ALL_TABLES = NOUNS + OBJECTS + PERSON_VERBS + OBJECT_VERBS + ADJECTIVES


# ---------------------------------------------------------------- paws

def paws_pairs(rng):
    rows = []

    def person_q(a, v, b, p=None):
        tail = f" in {p}" if p else ""
        t = rng.choice([
            "why would a {a} {v} a {b}{t} ?",
            "can a {a} {v} a {b}{t} ?",
            "is it normal for a {a} to {v} a {b}{t} ?",
            "how often does a {a} {v} the {b}{t} ?",
        ])
        return t.format(a=a, v=v, b=b, t=tail)

    def pick_people():
        a, b = rng.sample(NOUNS, 2)
        return a, b

    def add(s1, s2, label):
        rows.append((s1, s2, label))

    # negatives: argument swaps keep every word
    for _ in range(70):
        a, b = pick_people()
        v = rng.choice(PERSON_VERBS)
        aw, bw, vw = syn(rng, a), syn(rng, b), syn(rng, v)
        p = rng.choice(PLACES + [None])
        s1 = person_q(aw, vw, bw, p)
        s2 = s1.replace(f" {aw} ", " @@ ").replace(f" {bw} ", f" {aw} ").replace(" @@ ", f" {bw} ")
        add(s1, s2, 0)
    # negatives: adjectives swapped between two objects (same role)
    for _ in range(35):
        o1, o2 = rng.sample(OBJECTS, 2)
        j1, j2 = rng.sample(ADJECTIVES, 2)
        v = rng.choice(OBJECT_VERBS)
        n1, n2, a1, a2, vw = syn(rng, o1), syn(rng, o2), syn(rng, j1), syn(rng, j2), syn(rng, v)
        s1 = f"should i {vw} a {a1} {n1} or a {a2} {n2} ?"
        s2 = f"should i {vw} a {a2} {n1} or a {a1} {n2} ?"
        add(s1, s2, 0)
    # negatives: one content word changes meaning
    for _ in range(35):
        a, b = pick_people()
        v, v2 = rng.sample(PERSON_VERBS, 2)
        aw, bw, vw = syn(rng, a), syn(rng, b), syn(rng, v)
        s1 = person_q(aw, vw, bw)
        add(s1, s1.replace(f" {vw} ", f" {syn(rng, v2)} ", 1), 0)
    # positives: synonym rewrites
    for _ in range(30):
        a, b = pick_people()
        v = rng.choice(PERSON_VERBS)
        aw, bw, vw = syn(rng, a), syn(rng, b), syn(rng, v)
        s1 = person_q(aw, vw, bw)
        s2 = s1
        for w in (aw, bw, vw):
            if rng.random() < 0.8:
                s2 = s2.replace(f" {w} ", f" {other_variant(w, ALL_TABLES)} ", 1)
        add(s1, s2, 1)
    # positives: coordination swaps and object-choice swaps
    for _ in range(15):
        a, c, b = rng.sample(NOUNS, 3)
        v = rng.choice(PERSON_VERBS)
        aw, cw, bw, vw = syn(rng, a), syn(rng, c), syn(rng, b), syn(rng, v)
        s1 = f"why would a {aw} and a {cw} {vw} a {bw} ?"
        s2 = f"why would a {cw} and a {aw} {vw} a {bw} ?"
        add(s1, s2, 1)
    for _ in range(15):
        o1, o2 = rng.sample(OBJECTS, 2)
        j1, j2 = rng.sample(ADJECTIVES, 2)
        v = rng.choice(OBJECT_VERBS)
        n1, n2, a1, a2, vw = syn(rng, o1), syn(rng, o2), syn(rng, j1), syn(rng, j2), syn(rng, v)
        s1 = f"should i {vw} a {a1} {n1} or a {a2} {n2} ?"
        s2 = f"should i {vw} a {a2} {n2} or a {a1} {n1} ?"
        add(s1, s2, 1)
    rng.shuffle(rows)
    return rows


def build_paws():
    rng = random.Random(7)
    rows = []
    seen = set()
    for s1, s2, label in paws_pairs(rng):
        if s1 == s2 or (s1, s2) in seen:
            continue
        seen.add((s1, s2))
        rows.append((s1, s2, label))
    out = HERE / "paws"
    out.mkdir(exist_ok=True)
    with open(out / "paws_qqp_200.tsv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE)
        w.writerow(["id", "sentence1", "sentence2", "label"])
        for i, (s1, s2, label) in enumerate(rows, 1):
            w.writerow([f"q{i}", s1, s2, label])
    write_embeddings(out / "embeddings.jsonl", [t for s1, s2, _ in rows for t in (s1, s2)])
    return rows


# ---------------------------------------------------------------- run

SYSTEMS = {  # system -> (synonym rate, error rate)
    "online-A": (0.30, 0.05),
    "online-B": (0.25, 0.12),
    "uedin": (0.20, 0.22),
    "rbmt-1": (0.10, 0.33),
    "baseline-smt": (0.10, 0.48),
}


def source_sentences(rng):
    out = []
    while len(out) < 12:
        a, b = rng.sample(NOUNS, 2)
        v = rng.choice(PERSON_VERBS)
        o = rng.choice(OBJECTS)
        j = rng.choice(ADJECTIVES)
        ov = rng.choice(OBJECT_VERBS)
        t = rng.choice([
            "the {a} will {v} the {b} in {p} .",
            "my {a} should {v} a {b} .",
            "the {a} and the {b} {ov} a {j} {o} .",
            "why would a {a} {ov} the {j} {o} ?",
        ])
        s = t.format(a=a[0][0], b=b[0][0], v=v[0][0], o=o[0][0], j=j[0][0], ov=ov[0][0], p=rng.choice(PLACES))
        if s not in out:
            out.append(s)
    return out


def degrade(rng, sentence, syn_rate, err_rate):
    ws = sentence.split()
    errors = 0
    out = []
    for w in ws:
        if w in FUNCTION or w in PLACES:
            out.append(w)
            continue
        r = rng.random()
        if r < err_rate / 2:
            errors += 1
            continue
        if r < err_rate:
            errors += 1
            out.append(rng.choice(DISTRACTORS))
            continue
        out.append(other_variant(w, ALL_TABLES) if rng.random() < syn_rate else w)
    return " ".join(out), errors


def gloss(sentence):
    return " ".join(GLOSS.get(w, w) for w in sentence.split())


def build_run():
    rng = random.Random(11)
    out = HERE / "run"
    sources = source_sentences(rng)
    write_lines(out / "testset" / "source.en", sources)
    bt = {}
    errors = {}
    outputs = {}
    for system, (syn_rate, err_rate) in SYSTEMS.items():
        lines = []
        for seg, s in enumerate(sources, 1):
            english, e = degrade(rng, s, syn_rate, err_rate)
            german = gloss(english)
            assert bt.get(german, english) == english
            bt[german] = english
            errors[(system, seg)] = e
            lines.append(german)
        outputs[system] = lines
        write_lines(out / "systems" / f"{system}.de", lines)
    write_lines(out / "bt_table.tsv", [f"{de}\t{en}" for de, en in sorted(bt.items())])

    n = len(sources)
    da = []
    for system in SYSTEMS:
        rate = sum(errors[(system, s)] for s in range(1, n + 1)) / n
        da.append((system, round(0.55 - 0.6 * rate + rng.gauss(0, 0.05), 4)))
    write_lines(out / "human" / "da.csv", ["system,score"] + [f"{s},{v}" for s, v in da])
    darr = ["# segment better worse"]
    names = list(SYSTEMS)
    for seg in range(1, n + 1):
        for i, x in enumerate(names):
            for y in names[i + 1:]:
                ex, ey = errors[(x, seg)], errors[(y, seg)]
                if ex == ey:
                    continue
                better, worse = (x, y) if ex < ey else (y, x)
                if rng.random() < 0.1:
                    better, worse = worse, better
                darr.append(f"{seg} {better} {worse}")
    write_lines(out / "human" / "darr.tsv", darr)

    texts = sources + [t for lines in outputs.values() for t in lines] + list(bt.values())
    write_embeddings(out / "embeddings.jsonl", texts)


if __name__ == "__main__":
    build_paws()
    build_run()
