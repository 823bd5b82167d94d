#!/usr/bin/env python3
"""Write a demo smart-meter CSV (RAPT-style schema) for exercising the CLI.

Produces 5-minute aggregate-load readings over several days with a morning
and an evening peak, weekend variation, and optional injected gaps so the
cleansing stage has something to drop.
"""
import argparse
import datetime as dt
import sys
from pathlib import Path

import numpy as np


def day_profile(rng, weekend):
    minutes = np.arange(288) * 5 / 60.0  # hours
    base = rng.uniform(80, 140)
    morning = rng.uniform(300, 700) * np.exp(-((minutes - rng.uniform(6.5, 8.5)) ** 2) / 1.2)
    evening = rng.uniform(500, 1200) * np.exp(-((minutes - rng.uniform(18.0, 20.5)) ** 2) / 2.0)
    midday = rng.uniform(100, 450) * np.exp(-((minutes - 13.0) ** 2) / 6.0) if weekend else 0.0
    noise = rng.gamma(2.0, 25.0, size=288)
    return base + morning + evening + midday + noise


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", nargs="?", default="demo_house.csv")
    ap.add_argument("--days", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--gap-days", type=int, default=3, help="days with injected gaps")
    ap.add_argument("--start", default="2021-03-01")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    t0 = dt.datetime.fromisoformat(args.start).replace(tzinfo=dt.timezone.utc)
    gap_days = set(rng.choice(args.days, size=min(args.gap_days, args.days), replace=False))

    lines = ["timestamp,power_w"]
    for day in range(args.days):
        date = t0 + dt.timedelta(days=day)
        profile = day_profile(rng, weekend=date.weekday() >= 5)
        dropped = set()
        if day in gap_days:
            start = int(rng.integers(0, 288 - 12))
            dropped = set(range(start, start + int(rng.integers(1, 12))))
        for i in range(288):
            if i in dropped:
                continue
            ts = date + dt.timedelta(minutes=5 * i)
            lines.append(f"{ts.strftime('%Y-%m-%dT%H:%M:%S')}Z,{profile[i]:.2f}")

    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    complete = args.days - len(gap_days)
    print(f"wrote {args.out}: {args.days} days ({complete} complete) at 5-minute resolution")
    return 0


if __name__ == "__main__":
    sys.exit(main())
