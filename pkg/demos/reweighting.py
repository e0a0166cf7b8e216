"""Group reweighting on a two-group toy corpus.

One group's labels are a smooth function of its features and the other
group's labels are seeded noise on a constant feature vector.  A reference
model is trained on the uniform mixture, then the reweighting loop measures
how much each group still has to teach a fresh proxy and shifts weight
accordingly.

    python3 demos/reweighting.py
"""

from __future__ import annotations

import numpy as np

from cardmix import estimator
from cardmix.corpus import DomainWeights, GroupData, MixtureCorpus
from cardmix.dromixer import DroConfig, run_dro, sample_counts
from cardmix.estimator import TrainConfig
from cardmix.featurizer import DIM


def build_corpus(n: int = 400, seed: int = 0) -> MixtureCorpus:
    rng = np.random.default_rng(seed)
    w = rng.uniform(0, 1, DIM)
    X_learn = rng.uniform(0, 1, (n, DIM))
    X_learn[:, -1] = 0
    X_noise = np.tile(rng.uniform(0, 1, DIM), (n, 1))
    X_noise[:, -1] = 1
    return MixtureCorpus(
        (
            GroupData("learnable", X_learn, np.expm1(X_learn @ w / 2 + 1)),
            GroupData("noise", X_noise, np.rint(np.expm1(rng.uniform(2, 4, n)))),
        )
    )


def main() -> None:
    corpus = build_corpus()
    uniform = DomainWeights.uniform(corpus.names)
    reference = estimator.train(corpus, uniform, TrainConfig(epochs=30, batch_size=64, seed=1))
    X, cards, gidx = corpus.pooled()
    ref_losses = estimator.example_losses(reference, X, cards)
    for i, name in enumerate(corpus.names):
        print(f"reference loss on {name:9s}: {ref_losses[gidx == i].mean():.3f}")

    result = run_dro(corpus, reference, DroConfig(steps=300, batch_size=200, seed=3, proxy_train=TrainConfig(seed=4)))
    print("\nstep  " + "  ".join(f"{n:>9s}" for n in corpus.names))
    for step in (0, 9, 49, 149, 299):
        alpha, _ = result.trace[step]
        print(f"{step + 1:4d}  " + "  ".join(f"{a:9.4f}" for a in alpha))
    print("\ntime-averaged weights:", {k: round(v, 4) for k, v in result.weights.as_dict().items()})
    print("draws for a 1,000-example budget:", dict(zip(corpus.names, sample_counts(result.weights, 1000))))


if __name__ == "__main__":
    main()
