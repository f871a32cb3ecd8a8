"""Identify the generating structure among three mutually non-embedded n=6 candidates.

Each of the three candidates generates one dataset; all three are fitted to
every dataset and the best-scoring fit should be the generator.
"""

from dataclasses import dataclass, field, replace

from dfslearn import experiments as ex
from dfslearn.algebra import AlgebraStructure

from common import finish, parser, save_scan, setup

CANDIDATES = ("({2,3})", "({3,2})", "({1,5},{1,1})")


@dataclass
class GuessConfig:
    candidates: tuple = CANDIDATES
    data: ex.DataSpec = field(default_factory=ex.DataSpec)
    train: object = ex.DESK_TRAIN


def main():
    args = parser(__doc__.splitlines()[0], "guess_n6").parse_args()
    started = setup(args)
    cfg = GuessConfig()
    if args.full:
        cfg = replace(cfg, data=ex.FULL_SCAN, train=replace(cfg.train, epochs=ex.FULL_EPOCHS["scan6"], batch_size=None))
    cfg.train = replace(cfg.train, seed=args.seed)
    cands = [AlgebraStructure.parse(c) for c in cfg.candidates]
    files = []
    hits = 0
    for i, gen in enumerate(cands):
        res = ex.run_scan(gen, cands, cfg.train, args.seed + i, cfg.data, jobs=args.jobs)
        winner = res["scan"].rows[0].structure
        hits += winner == gen
        print(f"generator {gen.label()}: best fit {winner.label()}")
        files += save_scan(args.out, f"guess_{i}", res["scan"], {"generator": gen, "winner": winner})
    print(f"{hits}/{len(cands)} generators identified")
    finish(args, "guess_n6", cfg, files, started)


if __name__ == "__main__":
    main()
