#!/usr/bin/env python3
# Copyright 2026 The splitleak Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Converts the UCI Adult files (adult.data + adult.test) into one headed CSV.

Usage: prepare_adult.py <dir containing adult.data and adult.test> <out.csv>

The UCI files have no header, pad fields with a space and, in adult.test,
terminate the income label with a period. All 48,842 rows are kept; "?"
tokens are preserved and become their own category at load time.
"""

import csv
import pathlib
import sys

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]


def read_rows(path):
    with open(path, newline="") as f:
        for raw in csv.reader(f):
            fields = [x.strip() for x in raw]
            if len(fields) != len(COLUMNS):
                continue  # blank lines and the "|1x3 Cross validator" banner
            fields[-1] = fields[-1].rstrip(".")
            yield fields


def main(argv):
    if len(argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    src = pathlib.Path(argv[1])
    rows = list(read_rows(src / "adult.data")) + list(read_rows(src / "adult.test"))
    with open(argv[2], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COLUMNS)
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {argv[2]}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
