#!/usr/bin/env python3
"""Writes the bundled synthetic sentiment data (800 train / 200 test).

Each review mixes neutral filler with two or three cue words from its own
class, so the two classes are separable from the words alone.
"""
import argparse
import pathlib
import random

POSITIVE = ["wonderful", "brilliant", "delightful", "superb", "charming",
            "moving", "excellent", "gorgeous", "fun", "touching"]
NEGATIVE = ["awful", "boring", "dull", "painful", "clumsy",
            "tedious", "bland", "messy", "annoying", "lifeless"]
SUBJECTS = ["The movie", "This film", "The story", "The cast", "The plot",
            "The director's work", "The script", "This sequel", "The ending", "The soundtrack"]
FILLER = ["really", "quite", "overall", "mostly", "simply", "at times", "honestly", "in the end"]
ENDINGS = [".", "!", "."]


def sentence(rng, cues):
    words = rng.sample(cues, rng.choice([2, 3]))
    subject = rng.choice(SUBJECTS)
    filler = rng.choice(FILLER)
    if len(words) == 2:
        body = f"{subject} is {filler} {words[0]} and {words[1]}"
    else:
        body = f"{subject} is {filler} {words[0]}, {words[1]} and {words[2]}"
    return body + rng.choice(ENDINGS)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/synthetic")
    parser.add_argument("--seed", type=int, default=2021)
    parser.add_argument("--size", type=int, default=1000)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    rows = []
    for i in range(args.size):
        label = "positive" if i % 2 == 0 else "negative"
        text = sentence(rng, POSITIVE if label == "positive" else NEGATIVE)
        rows.append((f"syn-{i:04d}", text, label))

    # Balanced 80/20 split per class.
    train, test = [], []
    for label in ("positive", "negative"):
        part = [r for r in rows if r[2] == label]
        rng.shuffle(part)
        cut = len(part) * 4 // 5
        train += part[:cut]
        test += part[cut:]
    rng.shuffle(train)
    rng.shuffle(test)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train.tsv", train), ("test.tsv", test)):
        with open(out / name, "w") as f:
            f.write("id\tsentence1\tlabel\n")
            for row in part:
                f.write("\t".join(row) + "\n")


if __name__ == "__main__":
    main()
