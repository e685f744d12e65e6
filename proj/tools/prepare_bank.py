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
"""Converts UCI Bank Marketing bank-full.csv into the comma-separated form.

Usage: prepare_bank.py <bank-full.csv> <out.csv>

The UCI file is ';'-separated with quoted fields. Column names are kept;
"unknown" stays a category of its own. Expect 45,211 rows.
"""

import csv
import sys

COLUMNS = [
    "age", "job", "marital", "education", "default", "balance", "housing",
    "loan", "contact", "day", "month", "duration", "campaign", "pdays",
    "previous", "poutcome", "y",
]


def main(argv):
    if len(argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    with open(argv[1], newline="") as f:
        reader = csv.reader(f, delimiter=";", quotechar='"')
        header = [h.strip() for h in next(reader)]
        if header != COLUMNS:
            print(f"unexpected header: {header}", file=sys.stderr)
            return 1
        rows = [[x.strip() for x in r] for r in reader if r]
    bad = [i for i, r in enumerate(rows, start=2) if len(r) != len(COLUMNS)]
    if bad:
        print(f"malformed rows, first at line {bad[0]}", file=sys.stderr)
        return 1
    with open(argv[2], "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COLUMNS)
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {argv[2]}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
