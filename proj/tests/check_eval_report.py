#!/usr/bin/env python3
# Copyright 2026 The msstyle Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Validates an evaluation report against the documented JSON Schema and
recomputes its aggregate from the per-utterance rows.

usage: check_eval_report.py REPORT SCHEMA [EXPECTED_UTTERANCES]
"""
import json
import math
import sys

import jsonschema


def mean(values):
    return math.fsum(values) / len(values) if values else None


def close(a, b):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= 1e-9 * max(1.0, abs(a), abs(b))


def main():
    report_path, schema_path = sys.argv[1], sys.argv[2]
    with open(report_path) as f:
        report = json.load(f)
    with open(schema_path) as f:
        schema = json.load(f)
    jsonschema.validate(report, schema)

    rows = report["utterances"]
    agg = report["aggregate"]
    f0 = [r["f0_rmse"] for r in rows if r["f0_rmse"] is not None]
    want = {
        "f0_rmse": mean(f0),
        "energy_rmse": mean([r["energy_rmse"] for r in rows]),
        "duration_mse": mean([r["duration_mse"] for r in rows]),
    }
    problems = [f"{k}: report {agg[k]} vs recomputed {v}" for k, v in want.items() if not close(agg[k], v)]
    if agg["utterances"] != len(rows) or agg["f0_utterances"] != len(f0):
        problems.append("aggregate counts disagree with the rows")
    if report["complete"] != (len(report["failures"]) == 0):
        problems.append("complete flag disagrees with failures")
    if len(sys.argv) > 3 and len(rows) + len(report["failures"]) != int(sys.argv[3]):
        problems.append("rows + failures != split size")
    for p in problems:
        print("FAIL", p)
    if not problems:
        print("report ok:", len(rows), "utterances")
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
