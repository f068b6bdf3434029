#!/usr/bin/env python3
"""Convert the raw UCI Statlog German Credit file (german.data) into the CSV
consumed by `data/german_credit.schema.toml`.

Applies the AI Fairness 360 GermanDataset conventions:
  * `sex` derived from `personal_status` (A91/A93/A94 -> 1 male, A92/A95 -> 0 female),
    then `personal_status` dropped;
  * `age` binarized as 1 when age > 25 ("old"), 0 otherwise ("young").
Categorical columns are left as their UCI codes; one-hot encoding is done by
the loader according to the schema.

Usage: prepare_german_credit.py path/to/german.data > data/german_credit.csv

german.data is distributed with the UCI repository
(statlog/german/german.data) and is also bundled by several Python packages
(e.g. the `responsibly` wheel under responsibly/dataset/german/).
"""
import csv
import sys

COLUMNS = [
    "status", "month", "credit_history", "purpose", "credit_amount", "savings",
    "employment", "investment_as_income_percentage", "personal_status",
    "other_debtors", "residence_since", "property", "age", "installment_plans",
    "housing", "number_of_credits", "skill_level", "people_liable_for",
    "telephone", "foreign_worker", "credit",
]
SEX = {"A91": 1, "A93": 1, "A94": 1, "A92": 0, "A95": 0}


def main(path):
    out = csv.writer(sys.stdout, lineterminator="\n")
    header = [c for c in COLUMNS if c != "personal_status"] + ["sex"]
    out.writerow(header)
    with open(path) as fh:
        for line in fh:
            fields = line.split()
            if not fields:
                continue
            row = dict(zip(COLUMNS, fields))
            row["sex"] = SEX[row["personal_status"]]
            row["age"] = 1 if int(row["age"]) > 25 else 0
            out.writerow([row[c] for c in header])


if __name__ == "__main__":
    main(sys.argv[1])
