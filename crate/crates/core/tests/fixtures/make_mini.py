"""Generates the 30-image fixture and its oracle values.

    python3 make_mini.py          # writes mini/

The oracle is computed here directly from the definitions, with no code
shared with the Rust crate. Rerunning the script reproduces the committed
files byte for byte.
"""

import json
import math
import os
import random

ALPHA, BETA = 0.05, 0.1
BINS = 15
W, H = 64, 48
OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "mini")

CATEGORIES = [
    {"id": 1, "name": "person", "isthing": 1},
    {"id": 3, "name": "car", "isthing": 1},
    {"id": 9, "name": "boat", "isthing": 1},
    {"id": 47, "name": "cup", "isthing": 1},
    {"id": 67, "name": "dining table", "isthing": 1},
    {"id": 149, "name": "road", "isthing": 0},
    {"id": 155, "name": "sea", "isthing": 0},
    {"id": 183, "name": "unlabeled", "isthing": 0},
]
# category id -> (probability present, area range as fractions)
SCENES = {
    "street": {3: (0.8, (0.02, 0.2)), 149: (0.9, (0.05, 0.5)), 1: (0.5, (0.01, 0.1))},
    "harbor": {9: (0.8, (0.02, 0.2)), 155: (0.9, (0.1, 0.6)), 1: (0.3, (0.01, 0.05))},
    "kitchen": {47: (0.7, (0.005, 0.05)), 67: (0.8, (0.1, 0.4)), 1: (0.4, (0.02, 0.1))},
    "garage": {3: (0.9, (0.05, 0.3)), 149: (0.4, (0.0, 0.08)), 47: (0.3, (0.005, 0.02))},
}

TRAIN = list(range(1, 17))
VALID = list(range(17, 21))
TEST = list(range(21, 31))
SEED = 39


def build(rng):
    images, annotations = [], []
    ann_id = 1
    scenes = list(SCENES)
    for image_id in range(1, 31):
        images.append({"id": image_id, "width": W, "height": H, "file_name": f"{image_id:012d}.jpg"})
        scene = scenes[(image_id - 1) % len(scenes)]
        for cat, (p, (lo, hi)) in SCENES[scene].items():
            if rng.random() < p:
                # split the area over one or two instances
                total = round(rng.uniform(lo, hi) * W * H)
                parts = [total] if rng.random() < 0.5 or total < 2 else [total // 2, total - total // 2]
                for a in parts:
                    annotations.append({"id": ann_id, "image_id": image_id, "category_id": cat,
                                        "area": float(a), "iscrowd": 0})
                    ann_id += 1
        # stray context: a little road or sea anywhere
        if rng.random() < 0.3:
            cat = rng.choice([149, 155])
            annotations.append({"id": ann_id, "image_id": image_id, "category_id": cat,
                                "area": float(round(rng.uniform(0.0, 0.15) * W * H)), "iscrowd": 0})
            ann_id += 1
        if rng.random() < 0.2:
            annotations.append({"id": ann_id, "image_id": image_id, "category_id": 183,
                                "area": 100.0, "iscrowd": 0})
            ann_id += 1
    return {"images": images, "annotations": annotations, "categories": CATEGORIES}


def areas(doc):
    table = {}
    for a in doc["annotations"]:
        if a["category_id"] == 183:
            continue
        key = (a["image_id"], a["category_id"])
        table[key] = table.get(key, 0.0) + a["area"]
    return {k: v / (W * H) for k, v in table.items()}


def area(table, image, cat):
    return table.get((image, cat), 0.0)


def ce_oracle(doc, table, target):
    cats = [c["id"] for c in CATEGORIES if c["id"] not in (183, target)]
    positives = [i for i in TRAIN if area(table, i, target) > 0]
    scores = {}
    for c in cats:
        scores[c] = sum(area(table, i, c) - area(table, i, target) for i in positives) / len(positives)
    cues = sorted((c for c in cats if scores[c] > ALPHA), key=lambda c: (-scores[c], c))
    tags = {}
    for i in TEST:
        y = area(table, i, target) > 0
        cue_areas = [area(table, i, c) for c in cues]
        if y:
            hard = bool(cues) and all(a < BETA for a in cue_areas)
        else:
            hard = any(a > BETA for a in cue_areas)
        tags[i] = ("hard_" if hard else "easy_") + ("positive" if y else "negative")
    envs = {}
    if cues:
        for i in TEST:
            y = area(table, i, target) > 0
            c = area(table, i, cues[0]) > 0
            envs[i] = 2 * int(y) + int(c)
    return cues, tags, envs


def embeddings(rng, doc, table):
    # dims: street, harbor, kitchen, person, noise
    direction = {3: 0, 149: 0, 9: 1, 155: 1, 47: 2, 67: 2, 1: 3}
    rows = []
    for img in doc["images"]:
        i = img["id"]
        captions = []
        for _ in range(rng.choice([1, 2, 3])):
            v = [round(rng.gauss(0.0, 0.15), 4) for _ in range(5)]
            for cat, d in direction.items():
                if area(table, i, cat) > 0:
                    v[d] = round(v[d] + 1.0, 4)
            captions.append(v)
        rows.append({"image_id": i, "captions": captions})
    return rows


def mean(vectors):
    return [sum(col) / len(vectors) for col in zip(*vectors)]


def cosine(u, v):
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(x * x for x in v))
    return max(-1.0, min(1.0, sum(a * b for a, b in zip(u, v)) / (nu * nv)))


def gist_oracle(table, emb, target, ce_tags):
    by_id = {r["image_id"]: mean(r["captions"]) for r in emb}
    proto = mean([by_id[i] for i in TRAIN if area(table, i, target) > 0])
    sims = {i: cosine(by_id[i], proto) for i in TEST}
    n_hp = sum(t == "hard_positive" for t in ce_tags.values())
    n_hn = sum(t == "hard_negative" for t in ce_tags.values())
    pos = sorted(sims[i] for i in TEST if area(table, i, target) > 0)
    neg = sorted((sims[i] for i in TEST if area(table, i, target) == 0), reverse=True)
    # with distinct similarities the n lowest positives / n highest negatives
    assert len(set(sims.values())) == len(sims)
    return sims, min(n_hp, len(pos)), min(n_hn, len(neg))


def ece_bin(s, b):
    k = max(0, min(b - 1, math.ceil(s * b) - 1))
    while k > 0 and s <= k / b:
        k -= 1
    while k < b - 1 and s > (k + 1) / b:
        k += 1
    return k


def metrics(preds):
    """preds: list of (score, label); brute force."""
    if not preds:
        return {"count": 0, "auc": None, "error": None, "nll": None, "ece": None}
    eps = 1e-12
    pos = [s for s, y in preds if y]
    neg = [s for s, y in preds if not y]
    auc = None
    if pos and neg:
        wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
        auc = wins / (len(pos) * len(neg))
    error = sum((s > 0.5) != y for s, y in preds) / len(preds)
    nll = sum(-math.log(min(max(s, eps), 1 - eps)) if y else -math.log(1 - min(max(s, eps), 1 - eps))
              for s, y in preds) / len(preds)
    bins = {}
    for s, y in preds:
        bins.setdefault(ece_bin(s, BINS), []).append((s, y))
    ece = sum(len(m) / len(preds) * abs(sum(s for s, _ in m) / len(m) - sum(y for _, y in m) / len(m))
              for m in bins.values())
    return {"count": len(preds), "auc": auc, "error": error, "nll": nll, "ece": ece}


def xent(s, y):
    q = min(max(s, 1e-12), 1 - 1e-12)
    return -math.log(q) if y else -math.log(1 - q)


def main(write=True):
    rng = random.Random(SEED)
    doc = build(rng)
    table = areas(doc)
    emb = embeddings(rng, doc, table)
    split = {"seed": 0, "ratios": [16 / 30, 4 / 30, 10 / 30],
             "train": TRAIN, "valid": VALID, "test": TEST}

    oracle = {"alpha": ALPHA, "beta": BETA, "eval_split": "test", "ce": {}, "gist": {}}
    names = {c["id"]: c["name"].replace(" ", "-") for c in CATEGORIES}
    predictions, task_predictions = [], []
    for cat in [c for c in CATEGORIES if c["isthing"]]:
        target = cat["id"]
        name = names[target]
        if not any(area(table, i, target) > 0 for i in TRAIN):
            continue
        cues, tags, envs = ce_oracle(doc, table, target)
        counts = {t: sum(v == t for v in tags.values())
                  for t in ["hard_positive", "hard_negative", "easy_positive", "easy_negative"]}
        oracle["ce"][name] = {"cues": [names[c] for c in cues], "counts": counts,
                              "tags": {str(i): t for i, t in tags.items()},
                              "environments": {str(i): e for i, e in envs.items()}}
        sims, g_hp, g_hn = gist_oracle(table, emb, target, tags)
        oracle["gist"][name] = {"hard_positive": g_hp, "hard_negative": g_hn,
                                "similarities": {str(i): s for i, s in sims.items()}}
        # a deterministic pseudo-model: score from similarity, squashed into (0, 1)
        for i in TEST:
            score = round(1.0 / (1.0 + math.exp(-4.0 * sims[i])), 6)
            task_predictions.append({"task": name, "image_id": i, "score": score})
            if name == "car":
                predictions.append({"image_id": i, "score": score})

    # eval oracle on the car task
    car_tags = oracle["ce"]["car"]["tags"]
    scored = [(p["score"], car_tags[str(p["image_id"])]) for p in predictions]
    subsets = {
        "hard_pos": [(s, True) for s, t in scored if t == "hard_positive"],
        "hard_neg": [(s, False) for s, t in scored if t == "hard_negative"],
        "hard": [(s, t.endswith("positive")) for s, t in scored if t.startswith("hard")],
        "easy": [(s, t.endswith("positive")) for s, t in scored if t.startswith("easy")],
        "all": [(s, t.endswith("positive")) for s, t in scored],
    }
    oracle["eval_car"] = {k: metrics(v) for k, v in subsets.items()}

    # task scores: gap of hard-vs-all NLL per task, then the selection order
    gaps = {}
    for name, entry in oracle["ce"].items():
        tags = entry["tags"]
        rows = [p for p in task_predictions if p["task"] == name]
        losses = {str(p["image_id"]): xent(p["score"], tags[str(p["image_id"])].endswith("positive"))
                  for p in rows}
        hard = [losses[i] for i, t in tags.items() if t.startswith("hard")]
        if hard:
            gaps[name] = sum(hard) / len(hard) - sum(losses.values()) / len(losses)
    oracle["gaps"] = gaps
    eligible = [n for n, e in oracle["ce"].items()
                if n in gaps and e["counts"]["hard_positive"] >= 1 and e["counts"]["hard_negative"] >= 1]
    oracle["selection_min1_k2"] = sorted(eligible, key=lambda n: (-gaps[n], n))[:2]

    if not write:
        return oracle
    os.makedirs(OUT, exist_ok=True)
    with open(os.path.join(OUT, "annotations.json"), "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
    with open(os.path.join(OUT, "embeddings.jsonl"), "w") as f:
        for r in emb:
            f.write(json.dumps(r) + "\n")
    with open(os.path.join(OUT, "split.json"), "w") as f:
        json.dump(split, f, indent=2)
        f.write("\n")
    with open(os.path.join(OUT, "car-predictions.jsonl"), "w") as f:
        for p in predictions:
            f.write(json.dumps(p) + "\n")
    with open(os.path.join(OUT, "task-predictions.jsonl"), "w") as f:
        for p in task_predictions:
            f.write(json.dumps(p) + "\n")
    with open(os.path.join(OUT, "oracle.json"), "w") as f:
        json.dump(oracle, f, indent=2, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
