"""Convert the published case-study results (Stata .dta) to the CSV fixture.

    python scripts/convert_estimates.py estimates.dta crates/core/tests/fixtures/estimates.csv

Value labels are dropped so methods and DGMs keep their numeric codes
(1 exponential, 2 Weibull, 3 Cox), which are the column headers of the
reference table.
"""

import argparse
import os

import pandas as pd


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dta")
    parser.add_argument("csv")
    args = parser.parse_args()
    os.makedirs(os.path.dirname(args.csv) or ".", exist_ok=True)
    frame = pd.read_stata(args.dta, convert_categoricals=False)
    for column in frame.columns:
        if pd.api.types.is_float_dtype(frame[column]) and column in ("idrep", "dgm", "method"):
            frame[column] = frame[column].astype("Int64")
    frame.to_csv(args.csv, index=False, float_format="%.17g", na_rep="")
    print(f"{len(frame)} rows, columns {list(frame.columns)}")


if __name__ == "__main__":
    main()
