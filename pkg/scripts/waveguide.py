"""Structure scan on data from three emitters coupled to a squeezed waveguide."""

from dataclasses import dataclass, field, replace

from dfslearn import experiments as ex
from dfslearn.algebra import hierarchy_dag
from dfslearn.generator import model_propagator, verify_cptp
from dfslearn.physmodels import TABLE_STRUCTURES, WaveguideParams

from common import finish, parser, save_scan, setup


@dataclass
class WaveguideConfig:
    params: WaveguideParams = field(default_factory=WaveguideParams)
    candidates: tuple = ("({1,8})", "({2,1}^4)", "({8,1})")
    S: int = 50
    N: int = 100
    train: object = replace(ex.DESK_TRAIN, epochs=30, restarts=1)


def main():
    args = parser(__doc__.splitlines()[0], "waveguide").parse_args()
    started = setup(args)
    cfg = WaveguideConfig()
    if args.full:
        cfg = replace(cfg, candidates=TABLE_STRUCTURES, S=100, N=100,
                      train=replace(ex.DESK_TRAIN, epochs=ex.FULL_EPOCHS["waveguide"], batch_size=None))
    cfg.train = replace(cfg.train, seed=args.seed)
    res = ex.run_waveguide(cfg.train, args.seed, cfg.candidates, cfg.params, cfg.S, cfg.S, cfg.N, args.jobs)
    cptp = verify_cptp(model_propagator(res["operators"], cfg.params.tau))
    dag = hierarchy_dag(res["scan"].structures())
    files = save_scan(args.out, "waveguide", res["scan"], {"cptp": cptp.passed, "edges": sorted(
        [a.label(), b.label()] for a, b in dag.edges)})
    finish(args, "waveguide", cfg, files, started)


if __name__ == "__main__":
    main()
