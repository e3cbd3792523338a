"""Regenerate the golden fixtures under tests/fixtures.

Run from the repository root: ``python tools/make_fixtures.py``.  Binary
logs hold deterministic arithmetic data so they do not depend on any
random generator; the CSV/JSON goldens come from a seeded simulation.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from wvcal.dataio import REGISTRY, Channel, SensorDataset, write_imu_binary
from wvcal.grammar import parse_model
from wvcal.simulate import SimSpec, simulate
from wvcal.sumstats import avar, compare_wvar, hvar, wvar, wvar_robust

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
N_RECORDS = 64


def synthetic_dataset(integer: bool) -> SensorDataset:
    k = np.arange(N_RECORDS, dtype=float)
    chans = []
    for i, (kind, axis) in enumerate([(a, b) for a in ("gyro", "accel") for b in "XYZ"]):
        v = np.round(1000 * np.sin(0.1 * (i + 1) * k)) if integer else np.sin(0.1 * (i + 1) * k) * 10.0 ** (i - 3)
        chans.append(Channel(kind, axis, v, f"{kind}_{axis.lower()}"))
    return SensorDataset(tuple(chans), 100.0, k / 100.0)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, schema in REGISTRY.items():
        integer = any(np.dtype(d).kind in "iu" for d in schema.dtypes)
        write_imu_binary(OUT / f"imu_{name}.bin", synthetic_dataset(integer), schema)
    custom = {
        "name": "CUSTOM_BE",
        "header_bytes": 16,
        "fields": [
            {"name": "time", "dtype": ">f8"},
            *({"name": f"gyro_{a}", "dtype": ">i4", "scale": 0.5} for a in "xyz"),
            *({"name": f"accel_{a}", "dtype": ">f4", "scale": 2.0} for a in "xyz"),
        ],
    }
    (OUT / "schema_custom.json").write_text(json.dumps(custom, indent=2) + "\n")
    from wvcal.dataio import load_schema

    write_imu_binary(OUT / "imu_custom.bin", synthetic_dataset(True), load_schema(OUT / "schema_custom.json"), header=b"WVCALFIXTURE0001")

    x = simulate(SimSpec(parse_model("AR1(phi=0.9,sigma2=0.1)+WN(sigma2=1)"), 2048, 2024))
    (OUT / "signal.csv").write_text("x\n" + "".join(f"{float(v)!r}\n" for v in x))
    wv = wvar(x, 9, freq=10.0)
    (OUT / "golden_wvar.csv").write_text(wv.to_csv())
    (OUT / "golden_wvar.json").write_text(wv.to_json() + "\n")
    (OUT / "golden_wvar_robust.json").write_text(wvar_robust(x, 9, freq=10.0).to_json() + "\n")
    (OUT / "golden_avar.csv").write_text(avar(x, variant="modified", freq=10.0).to_csv())
    (OUT / "golden_hvar.csv").write_text(hvar(x, overlapping=True, freq=10.0).to_csv())
    rep = compare_wvar(wvar(x, 9), wvar_robust(x, 9), labels=("classical", "robust"))
    (OUT / "golden_compare.json").write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
