"""Benchmark runner: frame-count sweeps, seed roll-ups and comparisons.

Result layout under ``--out``::

    <scenario>/manifest.json
    <scenario>/summary.csv          mean/stddev per (algorithm, n)
    <scenario>/timing_summary.csv   scheduling wall time per (algorithm, n)
    <scenario>/<algo>/<n>/<seed>/{schedule.json, metrics.csv, gcl.csv, timing.csv}

Everything except the timing files is byte-identical for identical inputs.
"""
from __future__ import annotations

import argparse
import csv
import difflib
import hashlib
import io
import json
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .baselines import schedule_nwtt, schedule_rnwtt
from .model import Flow, InvalidParameter, Topology, ValidationError, default_topology, load_topology
from .scheduler import SchedulerConfig, run_mcfs2l
from .verify import compute_metrics, emit_gcl, gcl_to_csv, replay_verify, write_metrics_csv
from .workload import WorkloadParams, generate, load_flows, save_flows

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3

ALGORITHMS = {
    "mcfs2l": run_mcfs2l,
    "nwtt": schedule_nwtt,
    "rnwtt": schedule_rnwtt,
}
DEFAULT_NS = tuple(range(50, 501, 50))
SUMMARY_METRICS = ("critical_acceptance", "noncritical_acceptance", "bandwidth_utilization")
# Manifest keys that may differ between runs that are still comparable.
_COMPARE_IGNORED = {"algos", "name", "files"}


class ConfigError(Exception):
    pass


class VerificationFailed(Exception):
    def __init__(self, cell: str, violations):
        self.cell = cell
        self.violations = violations
        super().__init__(f"{cell}: {len(violations)} constraint violation(s)")


def parse_int_list(text: str) -> list[int]:
    """Parse ``"50,100"``, ``"1..10"`` or ``"50..500:50"`` (ranges inclusive)."""
    values: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if ".." in part:
                span, _, step = part.partition(":")
                lo, hi = (int(x) for x in span.split(".."))
                step = int(step) if step else 1
                if step <= 0 or hi < lo:
                    raise ValueError
                values.extend(range(lo, hi + 1, step))
            else:
                values.append(int(part))
    except ValueError:
        raise ConfigError(f"cannot parse integer list {text!r}") from None
    if not values:
        raise ConfigError(f"empty integer list {text!r}")
    return values


@dataclass
class Scenario:
    name: str = "default"
    ns: list[int] = field(default_factory=lambda: list(DEFAULT_NS))
    seeds: list[int] = field(default_factory=lambda: list(range(1, 11)))
    algos: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    workload: dict = field(default_factory=dict)
    topology: dict | None = None
    flows: list[dict] | None = None
    scheduler: dict = field(default_factory=dict)
    normalize_per_link: bool = False

    def validate(self) -> None:
        unknown = [a for a in self.algos if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithm(s) {unknown}; choose from {sorted(ALGORITHMS)}")
        if len(set(self.seeds)) != len(self.seeds) or len(set(self.ns)) != len(self.ns):
            raise ConfigError("duplicate values in --n or --seeds")
        if any(n < 0 for n in self.ns):
            raise ConfigError("--n values must be >= 0")
        try:
            self.scheduler_config(0)
            self.workload_params(0, 0)
        except TypeError as exc:
            raise ConfigError(f"unknown configuration key: {exc}") from None

    def topology_obj(self) -> Topology:
        return Topology.from_dict(self.topology) if self.topology else default_topology()

    def scheduler_config(self, seed: int) -> SchedulerConfig:
        return SchedulerConfig(**{**self.scheduler, "rng_seed": seed})

    def workload_params(self, n: int, seed: int) -> WorkloadParams:
        return WorkloadParams.from_dict({**self.workload, "n_frames": n, "rng_seed": seed})

    def cells(self):
        return [(algo, n, seed) for algo in self.algos for n in self.ns for seed in self.seeds]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CellResult:
    algo: str
    n: int
    seed: int
    metrics: object
    files: dict[str, str]
    violations: list


def run_cell(scenario: Scenario, algo: str, n: int, seed: int) -> CellResult:
    """Generate (or load) a workload, schedule, verify and render outputs."""
    topology = scenario.topology_obj()
    if scenario.flows is not None:
        flows = [Flow.from_dict(rec) for rec in scenario.flows]
    else:
        flows = generate(scenario.workload_params(n, seed), topology)
    cfg = scenario.scheduler_config(seed)

    started = time.perf_counter()
    schedule = ALGORITHMS[algo](flows, topology, cfg)
    elapsed = time.perf_counter() - started

    violations = replay_verify(schedule, topology)
    metrics = compute_metrics(schedule, flows, topology, elapsed, seed=seed,
                              normalize_per_link=scenario.normalize_per_link)
    metrics_csv = io.StringIO()
    write_metrics_csv([metrics], metrics_csv)
    files = {
        "schedule.json": json.dumps(schedule.to_dict(), indent=1, sort_keys=True) + "\n",
        "metrics.csv": metrics_csv.getvalue(),
        "timing.csv": f"algorithm,n_frames,seed,execution_time_s\n{algo},{n},{seed},{elapsed!r}\n",
    }
    if not violations:
        files["gcl.csv"] = gcl_to_csv(emit_gcl(schedule, topology))
    return CellResult(algo, n, seed, metrics, files, violations)


def _run_cell_args(args):
    return run_cell(*args)


def _workers() -> int:
    raw = os.environ.get("MCFS_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"MCFS_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError("MCFS_THREADS must be >= 1")
    return value


def run_cells(scenario: Scenario, workers: int = 1) -> list[CellResult]:
    """Run every (algorithm, n, seed) cell; results come back in cell order."""
    jobs = [(scenario, *cell) for cell in scenario.cells()]
    if workers <= 1 or len(jobs) <= 1:
        return [run_cell(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_args, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _stats(values) -> tuple[float, float]:
    values = list(values)
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def summarize(results: list[CellResult]) -> list[dict]:
    groups: dict[tuple[str, int], list[CellResult]] = {}
    for r in results:
        groups.setdefault((r.algo, r.n), []).append(r)
    rows = []
    for (algo, n), cells in groups.items():
        row = {"algorithm": algo, "n_frames": n, "runs": len(cells)}
        for metric in SUMMARY_METRICS:
            mean, std = _stats(getattr(c.metrics, metric) for c in cells)
            row[f"{metric}_mean"] = repr(mean)
            row[f"{metric}_std"] = repr(std)
        rows.append(row)
    return rows


def summary_columns() -> list[str]:
    cols = ["algorithm", "n_frames", "runs"]
    for metric in SUMMARY_METRICS:
        cols += [f"{metric}_mean", f"{metric}_std"]
    return cols


def _csv_text(rows, columns) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue()


def _timing_summary(results: list[CellResult]) -> str:
    groups: dict[tuple[str, int], list[float]] = {}
    for r in results:
        groups.setdefault((r.algo, r.n), []).append(r.metrics.execution_time)
    rows = []
    for (algo, n), times in groups.items():
        mean, std = _stats(times)
        rows.append({"algorithm": algo, "n_frames": n, "runs": len(times),
                     "execution_time_mean_s": repr(mean), "execution_time_std_s": repr(std)})
    return _csv_text(rows, ["algorithm", "n_frames", "runs", "execution_time_mean_s", "execution_time_std_s"])


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_results(scenario: Scenario, results: list[CellResult], out: Path) -> Path:
    root = out / scenario.name
    hashes = {}
    for r in results:
        cell_dir = root / r.algo / str(r.n) / str(r.seed)
        cell_dir.mkdir(parents=True, exist_ok=True)
        for name, text in r.files.items():
            (cell_dir / name).write_text(text)
            if name != "timing.csv":
                hashes[str(Path(r.algo, str(r.n), str(r.seed), name))] = _sha256(text)
    summary = _csv_text(summarize(results), summary_columns())
    (root / "summary.csv").write_text(summary)
    (root / "timing_summary.csv").write_text(_timing_summary(results))
    hashes["summary.csv"] = _sha256(summary)
    manifest = {**scenario.to_dict(), "files": dict(sorted(hashes.items()))}
    if scenario.flows is not None:
        # The flow set is identified by its hash; the records live in the input file.
        manifest["flows"] = _sha256(json.dumps(scenario.flows, sort_keys=True))
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return root


def run_scenario(scenario: Scenario, out: Path, workers: int | None = None) -> Path:
    """Run, verify and write a scenario; raises VerificationFailed on any violation."""
    scenario.validate()
    results = run_cells(scenario, _workers() if workers is None else workers)
    root = write_results(scenario, results, Path(out))
    for r in results:
        if r.violations:
            dump = root / r.algo / str(r.n) / str(r.seed) / "violations.txt"
            dump.write_text("".join(f"{v}\n" for v in r.violations))
            raise VerificationFailed(f"{r.algo}/n={r.n}/seed={r.seed}", r.violations)
    return root


def _load_result(path: Path) -> tuple[dict, list[dict]]:
    path = Path(path)
    root = path.parent if path.is_file() else path
    try:
        manifest = json.loads((root / "manifest.json").read_text())
        with open(root / "summary.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{root}: not a result directory ({exc})") from None
    return manifest, rows


def manifest_diff(a: dict, b: dict) -> str:
    """Unified diff of the comparable parts of two manifests; empty when they match."""
    def view(m):
        kept = {k: v for k, v in m.items() if k not in _COMPARE_IGNORED}
        return json.dumps(kept, indent=1, sort_keys=True).splitlines()
    return "\n".join(difflib.unified_diff(view(a), view(b), "first", "second", lineterm=""))


COMPARE_COLUMNS = ["n_frames", "baseline", "metric", "mcfs2l_mean", "baseline_mean", "delta"]


def compare(results) -> list[dict]:
    """Per (n, baseline, metric) delta of MCFS-2L's mean over the baseline's.

    ``results`` are result directories (or their summary.csv files).  Their
    manifests must agree on everything except the algorithm list.
    """
    loaded = [_load_result(p) for p in results]
    if not loaded:
        return []
    first = loaded[0][0]
    for manifest, _ in loaded[1:]:
        diff = manifest_diff(first, manifest)
        if diff:
            raise ConfigError("scenario manifests differ:\n" + diff)
    means: dict[tuple[str, int], dict] = {}
    for _, rows in loaded:
        for row in rows:
            means[(row["algorithm"], int(row["n_frames"]))] = row
    table = []
    for (algo, n) in sorted(means, key=lambda k: (k[1], k[0])):
        if algo == "mcfs2l" or ("mcfs2l", n) not in means:
            continue
        ours, theirs = means[("mcfs2l", n)], means[(algo, n)]
        for metric in SUMMARY_METRICS:
            a = float(ours[f"{metric}_mean"])
            b = float(theirs[f"{metric}_mean"])
            table.append({"n_frames": n, "baseline": algo, "metric": metric,
                          "mcfs2l_mean": repr(a), "baseline_mean": repr(b), "delta": repr(a - b)})
    return table


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", default=None, help="frame counts, e.g. 50,100 or 50..500:50")
    p.add_argument("--seeds", default="1..10", help="seed list or range, e.g. 1..10")
    p.add_argument("--algos", "--algo", default=",".join(ALGORITHMS),
                   help="comma list of " + ", ".join(ALGORITHMS))
    p.add_argument("--topology", type=Path, help="topology JSON (default: 3-DCU star)")
    p.add_argument("--flows", type=Path, help="flow-set JSON; replaces generation")
    p.add_argument("--workload", type=Path, help="JSON file with workload parameters")
    p.add_argument("--critical-fraction", type=float)
    p.add_argument("--no-deadline-floor", action="store_true",
                   help="draw deadlines from the full range even below a flow's route latency")
    p.add_argument("--step-ns", type=int, default=1_000)
    p.add_argument("--aggregate-equal-periods-only", action="store_true")
    p.add_argument("--uniform-payload", action="store_true",
                   help="every aggregate instance carries every member")
    p.add_argument("--no-split-critical", action="store_true",
                   help="reject failing critical-only residual aggregates whole")
    p.add_argument("--rnwtt-range", choices=("period", "slack", "deadline"), default="period")
    p.add_argument("--rnwtt-attempts", type=int)
    p.add_argument("--normalize-per-link", action="store_true")
    p.add_argument("--scenario", default="default", help="scenario name (output subdirectory)")
    p.add_argument("--out", type=Path, default=Path("out"))


def scenario_from_args(args) -> Scenario:
    workload = {}
    if args.workload:
        try:
            workload = json.loads(args.workload.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--workload: {exc}") from None
        if not isinstance(workload, dict):
            raise ConfigError("--workload must hold a JSON object")
        workload.pop("n_frames", None)
        workload.pop("rng_seed", None)
    if args.critical_fraction is not None:
        workload["critical_fraction"] = args.critical_fraction
    if args.no_deadline_floor:
        workload["deadline_floor"] = False

    topology = None
    if args.topology:
        try:
            topology = load_topology(args.topology).to_dict()
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"--topology: {exc}") from None

    flows = None
    ns = parse_int_list(args.n) if args.n else list(DEFAULT_NS)
    if args.flows:
        topo = Topology.from_dict(topology) if topology else default_topology()
        try:
            loaded = load_flows(args.flows, topo)
        except OSError as exc:
            raise ConfigError(f"--flows: {exc}") from None
        flows = [f.to_dict() for f in loaded]
        if args.n and ns != [len(loaded)]:
            raise ConfigError(f"--n {args.n} conflicts with {len(loaded)} flows in {args.flows}")
        ns = [len(loaded)]

    scheduler = {
        "step": args.step_ns,
        "equal_periods_only": args.aggregate_equal_periods_only,
        "uniform_payload": args.uniform_payload,
        "split_critical_residuals": not args.no_split_critical,
        "rnwtt_range": args.rnwtt_range,
        "rnwtt_attempts": args.rnwtt_attempts,
    }
    return Scenario(
        name=args.scenario,
        ns=ns,
        seeds=parse_int_list(args.seeds),
        algos=[a.strip() for a in args.algos.split(",") if a.strip()],
        workload=workload,
        topology=topology,
        flows=flows,
        scheduler=scheduler,
        normalize_per_link=args.normalize_per_link,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcfs2l", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic flow set to JSON")
    gen.add_argument("--n", type=int, default=100)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--critical-fraction", type=float)
    gen.add_argument("--no-deadline-floor", action="store_true")
    gen.add_argument("--topology", type=Path)
    gen.add_argument("--out", type=Path, required=True)

    run = sub.add_parser("run", help="run a scenario sweep")
    _add_scenario_flags(run)

    cmp_ = sub.add_parser("compare", help="MCFS-2L minus baseline deltas from result directories")
    cmp_.add_argument("results", nargs="*", type=Path)
    cmp_.add_argument("--out", type=Path, help="write the table here instead of stdout")
    return parser


def _cmd_generate(args) -> int:
    overrides = {"n_frames": args.n, "rng_seed": args.seed}
    if args.critical_fraction is not None:
        overrides["critical_fraction"] = args.critical_fraction
    if args.no_deadline_floor:
        overrides["deadline_floor"] = False
    params = replace(WorkloadParams(), **overrides)
    topology = load_topology(args.topology) if args.topology else default_topology()
    save_flows(generate(params, topology), args.out)
    return EXIT_OK


def _cmd_run(args) -> int:
    scenario = scenario_from_args(args)
    try:
        root = run_scenario(scenario, args.out)
    except VerificationFailed as exc:
        print(f"verification failed for {exc.cell}:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_VERIFY
    print((root / "summary.csv").read_text(), end="")
    return EXIT_OK


def _cmd_compare(args) -> int:
    text = _csv_text(compare(args.results), COMPARE_COLUMNS)
    if args.out:
        args.out.write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    handlers = {"generate": _cmd_generate, "run": _cmd_run, "compare": _cmd_compare}
    try:
        return handlers[args.command](args)
    except (ConfigError, InvalidParameter, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
