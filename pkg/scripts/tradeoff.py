"""Chain length against chain count at a fixed measurement budget N * S."""

import math
from dataclasses import dataclass, field, replace

from dfslearn import experiments as ex
from dfslearn.algebra import AlgebraStructure

from common import finish, parser, save_sweep, setup


@dataclass
class TradeoffConfig:
    generator: str = "({1,2},{1,2})"
    product: int = 6000
    lengths: tuple = (10, 50, 100, 200)
    test_size: tuple = (50, 100)
    data: ex.DataSpec = field(default_factory=ex.DataSpec)
    train: object = replace(ex.DESK_TRAIN, epochs=60)


def main():
    p = parser(__doc__.splitlines()[0], "tradeoff")
    p.add_argument("--product", type=int)
    args = p.parse_args()
    started = setup(args)
    cfg = TradeoffConfig()
    if args.full:
        cfg = replace(cfg, product=60000, lengths=(10, 50, 100, 200, 500, 1000), test_size=(100, 500),
                      train=replace(cfg.train, epochs=ex.FULL_EPOCHS["tradeoff"]))
    if args.product:
        cfg.product = args.product
    cfg.train = replace(cfg.train, seed=args.seed)
    res = ex.run_tradeoff(AlgebraStructure.parse(cfg.generator), cfg.train, args.seed, cfg.product,
                          cfg.lengths, cfg.data, cfg.test_size)
    print(f"spread of F/N across cells: {res['meta']['spread']:.4f}")
    finish(args, "tradeoff", cfg, save_sweep(args.out, "tradeoff", res), started)


if __name__ == "__main__":
    main()
