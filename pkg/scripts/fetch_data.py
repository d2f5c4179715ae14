#!/usr/bin/env python3
"""Download and prepare the three evaluation datasets into data/.

Requires general internet access (UCI archive, raw.githubusercontent.com),
which sandboxed environments may not have. Produces:

    data/cirrhosis.csv + data/cirrhosis.schema.json   (312 rows, 125/19/168)
    data/ckd.csv       + data/ckd.schema.json         (158 rows, 115/43)
    data/diabetes.csv  + data/diabetes.schema.json    (768 rows, 500/268)

Cirrhosis keeps the 312 randomized-trial participants (rows with a recorded
Drug) and drops the identifier and follow-up-days columns. CKD keeps
complete cases only. Diabetes (Pima) is written as distributed, with a
header row added.
"""

from __future__ import annotations

import csv
import io
import json
import sys
import urllib.request
import zipfile
from collections import Counter
from pathlib import Path

CIRRHOSIS_URL = (
    "https://archive.ics.uci.edu/static/public/878/"
    "cirrhosis+patient+survival+prediction+dataset+1.zip"
)
CKD_URL = "https://archive.ics.uci.edu/static/public/336/chronic+kidney+disease.zip"
PIMA_URL = "https://raw.githubusercontent.com/jbrownlee/Datasets/master/pima-indians-diabetes.csv"

CIRRHOSIS_SCHEMA = {
    "target": "Status",
    "continuous": [
        "Age", "Bilirubin", "Cholesterol", "Albumin", "Copper",
        "Alk_Phos", "SGOT", "Tryglicerides", "Platelets", "Prothrombin",
    ],
    "categorical": ["Drug", "Sex", "Ascites", "Hepatomegaly", "Spiders", "Edema", "Stage"],
}

CKD_COLUMNS = [
    "age", "bp", "sg", "al", "su", "rbc", "pc", "pcc", "ba", "bgr", "bu", "sc",
    "sod", "pot", "hemo", "pcv", "wc", "rc", "htn", "dm", "cad", "appet", "pe",
    "ane", "class",
]
CKD_SCHEMA = {
    "target": "class",
    "continuous": ["age", "bp", "bgr", "bu", "sc", "sod", "pot", "hemo", "pcv", "wc", "rc"],
    "categorical": ["sg", "al", "su", "rbc", "pc", "pcc", "ba", "htn", "dm", "cad", "appet", "pe", "ane"],
}

PIMA_COLUMNS = [
    "Pregnancies", "Glucose", "BloodPressure", "SkinThickness", "Insulin",
    "BMI", "DiabetesPedigreeFunction", "Age", "Outcome",
]
PIMA_SCHEMA = {
    "target": "Outcome",
    "continuous": PIMA_COLUMNS[:-1],
    "categorical": [],
}


def fetch(url: str) -> bytes:
    print(f"downloading {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read()


def check_counts(name: str, labels: list[str], expected: list[int]) -> None:
    counts = sorted(Counter(labels).values())
    if counts != sorted(expected):
        raise SystemExit(
            f"{name}: class counts {counts} do not match expected {sorted(expected)}"
        )
    print(f"{name}: class counts {dict(Counter(labels))} ok")


def prepare_cirrhosis(out_dir: Path) -> None:
    blob = fetch(CIRRHOSIS_URL)
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        member = next(n for n in zf.namelist() if n.endswith(".csv"))
        text = zf.read(member).decode("utf-8-sig")
    rows = list(csv.DictReader(io.StringIO(text)))
    keep_cols = CIRRHOSIS_SCHEMA["continuous"] + CIRRHOSIS_SCHEMA["categorical"] + ["Status"]
    trial = [r for r in rows if r.get("Drug", "").strip() not in ("", "NA")]
    if len(trial) != 312:
        raise SystemExit(f"cirrhosis: expected 312 trial rows, got {len(trial)}")
    check_counts("cirrhosis", [r["Status"] for r in trial], [125, 19, 168])
    with open(out_dir / "cirrhosis.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keep_cols)
        for r in trial:
            writer.writerow([r[c].strip() for c in keep_cols])
    (out_dir / "cirrhosis.schema.json").write_text(json.dumps(CIRRHOSIS_SCHEMA, indent=2))


def prepare_ckd(out_dir: Path) -> None:
    blob = fetch(CKD_URL)
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        names = [n for n in zf.namelist() if n.endswith(".arff")]
        member = next((n for n in names if "full" in n), names[0])
        text = zf.read(member).decode("utf-8", errors="replace")
    rows: list[list[str]] = []
    in_data = False
    for raw in text.splitlines():
        line = raw.strip()
        if not in_data:
            if line.lower().startswith("@data"):
                in_data = True
            continue
        if not line or line.startswith("%"):
            continue
        toks = [t.strip().strip("\t") for t in line.rstrip(",").split(",")]
        if len(toks) != len(CKD_COLUMNS):
            print(f"ckd: skipping malformed row with {len(toks)} fields")
            continue
        rows.append(["" if t in ("?", "") else t for t in toks])
    complete = [r for r in rows if all(r)]
    if len(complete) != 158:
        raise SystemExit(f"ckd: expected 158 complete cases, got {len(complete)}")
    check_counts("ckd", [r[-1] for r in complete], [115, 43])
    with open(out_dir / "ckd.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CKD_COLUMNS)
        writer.writerows(complete)
    (out_dir / "ckd.schema.json").write_text(json.dumps(CKD_SCHEMA, indent=2))


def prepare_diabetes(out_dir: Path) -> None:
    text = fetch(PIMA_URL).decode("utf-8")
    rows = [line.split(",") for line in text.strip().splitlines()]
    if any(len(r) != len(PIMA_COLUMNS) for r in rows):
        raise SystemExit("diabetes: unexpected column count")
    if len(rows) != 768:
        raise SystemExit(f"diabetes: expected 768 rows, got {len(rows)}")
    check_counts("diabetes", [r[-1] for r in rows], [500, 268])
    with open(out_dir / "diabetes.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PIMA_COLUMNS)
        writer.writerows(rows)
    (out_dir / "diabetes.schema.json").write_text(json.dumps(PIMA_SCHEMA, indent=2))


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "data"
    out_dir.mkdir(parents=True, exist_ok=True)
    prepare_cirrhosis(out_dir)
    prepare_ckd(out_dir)
    prepare_diabetes(out_dir)
    print(f"all datasets written to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
