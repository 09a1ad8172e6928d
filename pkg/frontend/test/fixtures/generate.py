"""Regenerate the CSV fixtures from the primary package's own writers.

Run from this directory:  python3 generate.py

The plotting layer consumes harness CSVs; these fixtures are produced by
the same code paths that write real experiment artifacts (write_eval_csv,
aggregate_stats), so a schema change upstream breaks regeneration loudly
instead of silently drifting from the tests.
"""
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[3] / "src"))

import numpy as np

from advrl.harness import EvalRecord, write_eval_csv, aggregate_stats

HERE = pathlib.Path(__file__).resolve().parent
ATTACKS = ("none", "sofa:alpha=0,n=64,sigma=0.3")
STEPS = (10_000, 20_000, 30_000, 40_000)
EPISODES = 5


def eval_records(rng, seeds, level, drift):
    recs = []
    for seed in seeds:
        for i, step in enumerate(STEPS):
            for attack in ATTACKS:
                base = level + drift * i + (120.0 if attack == "none" else 0.0)
                rets = tuple(float(base + 30.0 * rng.standard_normal())
                             for _ in range(EPISODES))
                recs.append(EvalRecord(seed=seed, step=step, attack=attack,
                                       returns=rets))
    return recs


def main():
    rng = np.random.default_rng(20240817)

    # multi-seed, multi-step tables for the curve plots
    write_eval_csv(HERE / "eval_vanilla.csv",
                   eval_records(rng, (0, 1, 2), -900.0, 150.0),
                   digest="aaaa1111aaaa1111", algo="sac", env_id="pendulum")
    write_eval_csv(HERE / "eval_sofa.csv",
                   eval_records(rng, (0, 1, 2), -820.0, 130.0),
                   digest="bbbb2222bbbb2222", algo="sofa_sac", env_id="pendulum")
    # same method and attacks under a different config digest: must be refused
    write_eval_csv(HERE / "eval_sofa_conflict.csv",
                   eval_records(rng, (3,), -820.0, 130.0),
                   digest="cccc3333cccc3333", algo="sofa_sac", env_id="pendulum")

    # hand-picked returns with closed-form stats: seed means are 2, 4 and 6,
    # so mean=4 and population std=sqrt(8/3); single-seed table for the
    # degenerate band
    known = [EvalRecord(seed=s, step=1000, attack="none",
                        returns=(float(m - 1), float(m + 1)))
             for s, m in ((0, 2.0), (1, 4.0), (2, 6.0))]
    write_eval_csv(HERE / "eval_known.csv", known,
                   digest="dddd4444dddd4444", algo="sac", env_id="pendulum")
    write_eval_csv(HERE / "eval_single_seed.csv",
                   [EvalRecord(seed=0, step=1000, attack="none",
                               returns=(1.0, 3.0)),
                    EvalRecord(seed=0, step=2000, attack="none",
                               returns=(5.0, 7.0))],
                   digest="eeee5555eeee5555", algo="sac", env_id="pendulum")
    write_eval_csv(HERE / "eval_twin_seeds.csv",
                   [EvalRecord(seed=s, step=1000, attack="none",
                               returns=(1.0, 3.0)) for s in (0, 1)],
                   digest="abab7777abab7777", algo="sac", env_id="pendulum")

    # stats table with a planted extreme seed so the outlier list is
    # non-empty; one degenerate single-seed cell
    final = STEPS[-1]
    spread = [EvalRecord(seed=s, step=final, attack=a,
                         returns=tuple(float(v + d) for d in (-5.0, 0.0, 5.0)))
              for a, base in zip(ATTACKS, (-150.0, -1100.0))
              for s, v in enumerate((base, base - 8.0, base + 6.0, base - 3.0,
                                     base - 420.0))]
    write_eval_csv(HERE / "eval_for_stats_a.csv", spread,
                   digest="ffff6666ffff6666", algo="sac", env_id="pendulum")
    write_eval_csv(HERE / "eval_for_stats_b.csv",
                   eval_records(rng, (0, 1, 2, 3, 4), -820.0, 130.0),
                   digest="bbbb2222bbbb2222", algo="sofa_sac", env_id="pendulum")
    aggregate_stats([HERE / "eval_for_stats_a.csv",
                     HERE / "eval_for_stats_b.csv"], HERE / "stats.csv")

    # same cells, different digest: plot-boxes must refuse the pair
    write_eval_csv(HERE / "eval_for_stats_a2.csv", spread,
                   digest="9999000099990000", algo="sac", env_id="pendulum")
    aggregate_stats([HERE / "eval_for_stats_a2.csv"], HERE / "stats_conflict.csv")

    aggregate_stats([HERE / "eval_single_seed.csv"], HERE / "stats_degenerate.csv")

    # sanity: the planted seed must actually be flagged upstream
    import csv as _csv
    with open(HERE / "stats.csv") as f:
        f.readline()
        rows = list(_csv.DictReader(f))
    n_out = sum(len(r["outliers"].split(";")) if r["outliers"] else 0
                for r in rows)
    assert n_out >= 2, f"expected planted outliers, stats table has {n_out}"
    print(f"fixtures written to {HERE} ({n_out} outliers in stats.csv)")


if __name__ == "__main__":
    main()
