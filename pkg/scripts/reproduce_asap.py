"""Reproduce the ASAP prompt 3 cross-validation result.

This is an hours-scale CPU run, so it is a documented script rather than a
test. It drives the shipped ``coattn train`` command with the trained
setting (the RunConfig defaults): 5-fold CV, 100 epochs per fold with
dev-set model selection, RMSprop at lr 0.001, 50-d embeddings, 100
conv filters / LSTM units, vocabulary 4000, scores 0..3.

You need three local files (none are redistributable here):

1. --corpus   training_set_rel3.tsv from the Kaggle ASAP-AES release
              (tab separated, one essay per row; the script selects
              essay_set 3 and reads domain1_score).
2. --article  the prompt 3 source reading passage saved as plain text
              (from the essay-set description materials in the same
              release). One file, raw text, any line wrapping.
3. --embeddings  optional but recommended: 50-d GloVe vectors
              (glove.6B.50d.txt), one 'token v1 ... v50' line each.

Example:
    python scripts/reproduce_asap.py \
        --corpus data/training_set_rel3.tsv \
        --article data/prompt3_source.txt \
        --embeddings data/glove.6B.50d.txt \
        --out-dir runs/asap3

Afterwards point the acceptance test at the result:
    COATTN_ASAP_SUMMARY=runs/asap3/summary.tsv python -m pytest \
        tests/test_acceptance.py -k criterion_7

The expected mean QWK over the five folds is at or above 0.60; the
per-fold numbers and the paired comparison against a constant baseline
are in summary.tsv, per-epoch curves in fold*.log.
"""

import argparse
import sys

from coattn.cli import main as coattn_main


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--corpus", required=True,
                        help="ASAP training_set_rel3.tsv")
    parser.add_argument("--article", required=True,
                        help="prompt 3 source passage as plain text")
    parser.add_argument("--embeddings", default=None,
                        help="optional glove.6B.50d.txt")
    parser.add_argument("--out-dir", default="runs/asap3")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=100,
                        help="lower this only for smoke tests")
    args = parser.parse_args()

    argv = [
        "train",
        "--corpus", args.corpus,
        "--article", args.article,
        "--out-dir", args.out_dir,
        "--seed", str(args.seed),
        "--epochs", str(args.epochs),
        "--set", "corpus_format=asap_tsv",
        "--set", "prompt_id=3",
        "--set", "min_score=0",
        "--set", "max_score=3",
    ]
    if args.embeddings:
        argv += ["--embeddings", args.embeddings]
    return coattn_main(argv)


if __name__ == "__main__":
    sys.exit(main())
