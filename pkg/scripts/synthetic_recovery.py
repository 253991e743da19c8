"""Coverage and bias of coefficient intervals over many synthetic replicates."""
import argparse
import time

import numpy as np

from rw2cf.data_io import prepare
from rw2cf.evaluation import SyntheticSpec, simulate_synthetic
from rw2cf.sampler import ModelConfig, SamplerSettings, run_chains, summarize_coefficients


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replicates", type=int, default=100)
    ap.add_argument("--T", type=int, default=240)
    ap.add_argument("--iterations", type=int, default=4000)
    ap.add_argument("--burn-in", type=int, default=1000)
    ap.add_argument("--thin", type=int, default=3)
    ap.add_argument("--chains", type=int, default=2)
    ap.add_argument("--seed", type=int, default=5000)
    ap.add_argument("--latent-update", default="joint")
    args = ap.parse_args()

    truth = {"beta0": 0.0, "temperature": 0.7, "rainfall": -0.3, "lag12": 0.3, "v": 0.25, "v_e": 1e-4}
    cfg = ModelConfig(("temperature", "rainfall"), latent_update=args.latent_update)
    hits = {n: 0 for n in truth}
    meds = {n: [] for n in truth}
    t0 = time.perf_counter()
    for rep in range(args.replicates):
        ds, latent = simulate_synthetic(SyntheticSpec(T=args.T, seed=args.seed + rep))
        inp = prepare(ds, cfg, ds.end)
        settings = SamplerSettings(args.chains, args.iterations, args.burn_in, args.thin, seed=rep)
        rows = {r.name: r for r in summarize_coefficients(run_chains(inp, cfg, settings))}
        target = dict(truth, beta0=truth["beta0"] + latent.centered_beta0_shift)
        for n in truth:
            hits[n] += rows[n].lower <= target[n] <= rows[n].upper
            meds[n].append(rows[n].median - target[n])
    print(f"{args.replicates} replicates, T={args.T}, {time.perf_counter() - t0:.0f}s")
    print(f"{'param':<12}{'coverage':>10}{'mean bias':>12}{'sd(median)':>12}")
    for n in truth:
        m = np.array(meds[n])
        print(f"{n:<12}{hits[n] / args.replicates:>10.3f}{m.mean():>12.4g}{m.std(ddof=1):>12.4g}")


if __name__ == "__main__":
    main()
