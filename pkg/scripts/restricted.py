"""Train through restricted observable algebras and test on full and on restricted data."""

from dataclasses import dataclass, field, replace

from dfslearn import experiments as ex
from dfslearn.algebra import AlgebraStructure

from common import finish, parser, save_sweep, setup


@dataclass
class RestrictedConfig:
    generators: tuple = ("({2,2},{1,1})", "({1,5})")
    n0_values: tuple = (0, 2)
    postselect: bool = True
    data: ex.DataSpec = field(default_factory=ex.DataSpec)
    train: object = ex.DESK_TRAIN


def main():
    p = parser(__doc__.splitlines()[0], "restricted")
    p.add_argument("--complement", action="store_true",
                   help="record the inaccessible block as an outcome instead of post-selecting")
    args = p.parse_args()
    started = setup(args)
    cfg = RestrictedConfig(postselect=not args.complement)
    if args.full:
        cfg = replace(cfg, n0_values=(0, 1, 2, 3), data=ex.FULL_SCAN,
                      train=replace(cfg.train, epochs=ex.FULL_EPOCHS["restricted"], batch_size=None))
    cfg.train = replace(cfg.train, seed=args.seed)
    files = []
    for i, label in enumerate(cfg.generators):
        res = ex.run_restricted(AlgebraStructure.parse(label), cfg.train, args.seed, cfg.n0_values, cfg.data,
                                postselect=cfg.postselect)
        print(label)
        files += save_sweep(args.out, f"restricted_{i}", res)
    finish(args, "restricted", cfg, files, started)


if __name__ == "__main__":
    main()
