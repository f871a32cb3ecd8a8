"""Rank all eleven canonical n=4 structures on data from one generating structure.

    python scripts/scan_n4.py --generator "({1,4})"
    python scripts/scan_n4.py --generator "({2,2})" --full --jobs 4
"""

from dataclasses import dataclass, field, replace

from dfslearn import experiments as ex
from dfslearn.algebra import AlgebraStructure

from common import finish, parser, save_scan, setup


@dataclass
class ScanConfig:
    generator: str = "({1,4})"
    data: ex.DataSpec = field(default_factory=ex.DataSpec)
    train: object = ex.DESK_TRAIN
    margin: float = 0.01


def main():
    p = parser(__doc__.splitlines()[0], "scan_n4")
    p.add_argument("--generator", default="({1,4})")
    args = p.parse_args()
    started = setup(args)
    cfg = ScanConfig(args.generator)
    if args.full:
        cfg = replace(cfg, data=ex.FULL_SCAN, train=replace(cfg.train, epochs=ex.FULL_EPOCHS["scan"], batch_size=None))
    cfg.train = replace(cfg.train, seed=args.seed)
    res = ex.run_scan(AlgebraStructure.parse(cfg.generator), None, cfg.train, args.seed, cfg.data,
                      jobs=args.jobs, margin=cfg.margin)
    summary = {"violations": [[v.complex_structure, v.simple_structure, v.shortfall] for v in res["violations"]],
               "frontier": res["frontier"]}
    files = save_scan(args.out, "scan", res["scan"], summary)
    print(f"violations at margin {cfg.margin}: {len(res['violations'])}; frontier {res['frontier'].label()}")
    finish(args, "scan_n4", cfg, files, started)


if __name__ == "__main__":
    main()
