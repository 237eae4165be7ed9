"""Named experiments behind the complexity claims (runnable with ``tobench sweep --preset``)."""

from __future__ import annotations

from .sweep import ExperimentSpec

CHAIN_N = [8, 16, 32, 64, 128, 256]
BFT_N = [8, 16, 32, 64, 128]
KAPPAS = [8, 16, 32, 64]


def _chain(protocol: str) -> list[ExperimentSpec]:
    return [
        ExperimentSpec(f"{protocol}-n-sweep", protocol, [("n", CHAIN_N)], base=dict(kappa=16)),
        ExperimentSpec(f"{protocol}-kappa-sweep", protocol, [("kappa", KAPPAS)], base=dict(n=16)),
    ]


def build_presets(seeds: int = 20) -> dict[str, ExperimentSpec]:
    specs = [
        *_chain("nakamoto"), *_chain("ouroboros"), *_chain("snowwhite"),
        ExperimentSpec("tendermint-n-sweep", "tendermint", [("n", BFT_N)], base=dict(b=8)),
        ExperimentSpec("tendermint-worst-n-sweep", "tendermint", [("n", BFT_N)],
                       base=dict(b=8, alpha="3/10", corruption="worst")),
        ExperimentSpec("hbbft-n-sweep", "hbbft", [("n", BFT_N)], base=dict(b=1024)),
        ExperimentSpec("hbbft-batch-n-sweep", "hbbft", [("n", BFT_N)], base=dict(batch_policy="hbbft")),
        # n >= 32 keeps the expected proposer count near kappa*ln2 (it saturates below)
        ExperimentSpec("algorand-n-sweep", "algorand", [("n", [32, 64, 128, 256, 512])],
                       base=dict(kappa=16, b=2**20)),
        ExperimentSpec("spectre-n-sweep", "spectre", [("n", CHAIN_N)],
                       base=dict(spectre_rate=0.5, epsilon=2.0**-10)),
        ExperimentSpec("spectre-rate-sweep", "spectre",
                       [("epsilon", [1.0, 2.0**-4, 2.0**-8, 2.0**-12, 2.0**-16]), ("spectre_rate", [0.25, 0.5, 1.0])],
                       base=dict(n=16, alpha="1/5")),
    ]
    for s in specs:
        s.seeds = seeds
    return {s.name: s for s in specs}


PRESETS = build_presets()
