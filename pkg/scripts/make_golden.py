"""Record the golden label for the case6 reference schedule (ODE path at half step)."""

from pathlib import Path

import numpy as np

from rcuc import dynamics as dy
from rcuc.grid import load_case

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "golden_labels.json"

REF_U = np.array([1, 1, 0, 1, 0, 1])
REF_P = np.array([160.0, 120.0, 0.0, 60.0, 0.0, 70.0])

if __name__ == "__main__":
    case = load_case("case6")
    cfg = dy.LabelConfig(step_s=dy.DEFAULT_STEP_S / 2)
    table = dy.load_golden(OUT)
    table[dy.sample_hash(case, REF_U, REF_P)] = dy.label_sample(case, REF_U, REF_P, cfg)
    dy.save_golden(OUT, table)
    print(table)
