"""Command-line entry point wiring the pipeline stages together.

Subcommands: ingest | fit | predict | decide | baseline | compare |
simulate.  Every report embeds the seed and a hash of the effective
configuration; all randomness flows from --seed.  Exit codes: 0 on
success, 1 on validation errors, 2 on runtime/model errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import baseline as baseline_mod
from . import ingest as ingest_mod
from . import model as model_mod
from . import predictor as predictor_mod
from . import sampler as sampler_mod
from . import simulator as simulator_mod

__all__ = ["main", "run", "emit_report"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{message}\n{self.format_usage()}")


def _jsonable(value):
    if isinstance(value, dict):
        return {key: _jsonable(v) for key, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _config_hash(config: dict) -> str:
    canonical = json.dumps(_jsonable(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError("config document must hold a JSON object")
    return raw


def _parse_number_list(text: str, flag: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"{flag} expects a comma-separated list of numbers") from None


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"{flag} expects a comma-separated list of integers") from None


def emit_report(report: dict, fmt: str, out_path: str | None, quiet: bool = False) -> None:
    """Serialize a stage report as a JSON document or a delimited table."""
    if fmt == "doc":
        text = json.dumps(_jsonable(report), indent=2) + "\n"
    else:
        rows = report.get("per_phase") or report.get("phases")
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        if isinstance(rows, list) and rows and isinstance(rows[0], dict):
            header = list(rows[0].keys())
            writer.writerow(header)
            for row in rows:
                writer.writerow([_format_cell(row.get(k)) for k in header])
        else:
            writer.writerow(["key", "value"])
            for key, value in report.items():
                writer.writerow([key, _format_cell(value)])
        text = buffer.getvalue()
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        if not quiet:
            print(f"wrote {out_path}")
    else:
        sys.stdout.write(text)


def _format_cell(value) -> str:
    value = _jsonable(value)
    if isinstance(value, (dict, list)):
        return json.dumps(value)
    return "" if value is None else str(value)


def _summaries_from_args(args) -> list[ingest_mod.PhaseSummary]:
    if args.per_input:
        records, runs = ingest_mod.parse_input_log(args.data)
    else:
        records = ingest_mod.parse_test_log(args.data)
        if not args.runs:
            raise ValueError("--runs is required unless --per-input is set")
        runs = _parse_int_list(args.runs, "--runs")
    return ingest_mod.summarize_phases(records, runs)


def _cmd_ingest(args) -> dict:
    summaries = _summaries_from_args(args)
    # reports carry content hashes, not paths, so identical inputs give
    # byte-identical reports wherever the files live
    config = {"data_sha256": _file_sha256(args.data), "runs": args.runs, "per_input": args.per_input}
    report = {"command": "ingest", "seed": args.seed, "config_sha256": _config_hash(config)}
    report.update(ingest_mod.phase_summary_doc(summaries))
    return report


def _cmd_fit(args) -> dict:
    summaries = _summaries_from_args(args)
    summaries = [s for s in summaries if s.distinct_bugs > 0]
    if not summaries:
        raise ValueError("no phase in the input contains any logged defect")
    raw_config = _load_config(args.config)
    hyper_config = model_mod.HyperConfig.from_dict(raw_config)
    hyper = model_mod.build_hyperparams(summaries, hyper_config, args.seed)
    sampler_config = sampler_mod.SamplerConfig(
        chains=args.chains,
        iterations=args.iterations,
        burn_in=args.burn_in,
        thin=args.thin,
        seed=args.seed,
        epsilon_floor=args.epsilon_floor,
    )
    posterior = sampler_mod.run_chain(summaries, hyper, sampler_config, workers=args.workers)

    if args.dump_draws:
        _dump_draws(posterior, args.dump_draws)

    effective = {
        "data_sha256": _file_sha256(args.data),
        "runs": args.runs,
        "per_input": args.per_input,
        "hyper": raw_config,
        "chains": args.chains,
        "iterations": args.iterations,
        "burn_in": args.burn_in,
        "thin": args.thin,
        "epsilon_floor": args.epsilon_floor,
    }
    low, high = posterior.F_ci
    per_phase = []
    for idx, summary in enumerate(summaries):
        diag = posterior.diagnostics[idx] if posterior.diagnostics else None
        per_phase.append(
            {
                "phase": summary.phase,
                "F_mean": float(posterior.F_mean[idx]),
                "F_median": float(posterior.F_median[idx]),
                "F_ci_low": float(low[idx]),
                "F_ci_high": float(high[idx]),
                "r_hat": diag.r_hat if diag else None,
                "ess": diag.ess if diag else None,
            }
        )
    report = {
        "command": "fit",
        "seed": args.seed,
        "config_sha256": _config_hash(effective),
        "config": effective,
        "per_phase": per_phase,
        "acceptance_rate_mean": posterior.acceptance_rate_mean,
        "iterations": posterior.iterations,
        "burn_in": posterior.burn_in,
        "thin": posterior.thin,
        "chains": posterior.chains,
    }
    if posterior.diagnostics and any(d.r_hat > 1.1 for d in posterior.diagnostics):
        report["convergence_warning"] = "split R-hat above 1.1 for at least one phase"
    return report


def _dump_draws(posterior: sampler_mod.PosteriorSummary, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["iteration", "chain", "phase", "F"])
        for chain in range(posterior.chains):
            for k in range(posterior.draws.shape[1]):
                iteration = posterior.burn_in + k * posterior.thin
                for phase_idx in range(posterior.draws.shape[2]):
                    writer.writerow(
                        [iteration, chain, phase_idx + 1, repr(float(posterior.draws[chain, k, phase_idx]))]
                    )


def _totals_from_args(args) -> list[float]:
    if args.totals:
        return _parse_number_list(args.totals, "--totals")
    if args.from_report:
        report = json.loads(Path(args.from_report).read_text(encoding="utf-8"))
        totals: list[float] = []
        if "per_phase" in report:
            totals = [float(row["F_mean"]) for row in report["per_phase"]]
        elif "totals" in report:
            totals = [float(x) for x in report["totals"]]
        if "predicted_next_total" in report:
            totals.append(float(report["predicted_next_total"]))
        if not totals:
            raise ValueError(f"{args.from_report} holds no per-phase totals")
        return totals
    raise ValueError("either --totals or --from-report is required")


def _cmd_predict(args) -> dict:
    totals = _totals_from_args(args)
    raw_config = _load_config(args.config)
    windows = raw_config.get("windows")
    events = predictor_mod.events_from_totals(totals, windows)
    cv_samples = None
    if args.draws:
        cv_samples = tuple(_draws_from_dump(args.draws))
    kde_config = predictor_mod.KdeConfig(
        bandwidth=args.bandwidth if args.bandwidth is not None else "auto",
        temporal_rate=args.temporal_rate,
        cv_grid=tuple(_parse_number_list(args.cv_grid, "--cv-grid")) if args.cv_grid else None,
        cv_samples=cv_samples,
    )
    prediction = predictor_mod.predict_next_total(events, kde_config)
    effective = {
        "totals": totals,
        "bandwidth": args.bandwidth,
        "temporal_rate": args.temporal_rate,
        "cv_grid": args.cv_grid,
        "windows": windows,
        "epsilon": args.epsilon,
    }
    report = {
        "command": "predict",
        "seed": args.seed,
        "config_sha256": _config_hash(effective),
        "totals": totals,
        "predicted_next_total": prediction.mean,
        "predicted_median": prediction.median,
        "predicted_mode": prediction.mode,
        "h_selected": prediction.bandwidth,
        "weights": list(prediction.weights),
        "truncated_mass": prediction.truncated_mass,
        "epsilon": args.epsilon,
        "decision": None,
    }
    if args.epsilon is not None:
        decision = predictor_mod.decide_stop(totals + [prediction.mean], args.epsilon)
        report["decision"] = _decision_doc(decision)
    return report


def _draws_from_dump(path: str) -> list[float]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        values = [float(row["F"]) for row in reader]
    if not values:
        raise ValueError(f"{path} holds no draws")
    return values


def _decision_doc(decision: predictor_mod.StopDecision) -> dict:
    if decision.should_stop:
        return {"action": "stop", "stop_after_phase": decision.stop_after_phase}
    return {"action": "continue", "stop_after_phase": None}


def _cmd_decide(args) -> dict:
    totals = _totals_from_args(args)
    decision = predictor_mod.decide_stop(totals, args.epsilon)
    effective = {"totals": totals, "epsilon": args.epsilon}
    report = {
        "command": "decide",
        "seed": args.seed,
        "config_sha256": _config_hash(effective),
        "epsilon": args.epsilon,
        "totals": totals,
        "stop_after_phase": decision.stop_after_phase,
    }
    report.update(_decision_doc(decision))
    return report


def _cmd_baseline(args) -> dict:
    raw_config = _load_config(args.config)
    for key in ("n_total", "p0", "delta"):
        if key not in raw_config:
            raise ValueError(f"baseline config must set '{key}'")
    n_total = int(raw_config["n_total"])
    p0 = float(raw_config["p0"])
    delta = float(raw_config["delta"])

    counts_by_phase: dict[int, dict[int, int]] = {}
    with open(args.detections, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        required = {"phase", "class", "count"}
        if reader.fieldnames is None or not required <= {f.strip() for f in reader.fieldnames}:
            raise ingest_mod.SchemaError("detections table needs columns phase, class, count")
        for row in reader:
            phase = int(row["phase"])
            cls = int(row["class"])
            counts_by_phase.setdefault(phase, {})[cls] = int(row["count"])

    q_config = raw_config.get("q")
    if q_config is None:
        raise ValueError("baseline config must set 'q' (per-phase detection probabilities)")
    detections = []
    classes = sorted({cls for counts in counts_by_phase.values() for cls in counts})
    phases = sorted(counts_by_phase)
    if phases != list(range(1, len(phases) + 1)):
        raise ValueError("detection phases must form a contiguous range starting at 1")
    for phase, q_entry in zip(phases, q_config):
        q_detect = tuple(float(x) for x in q_entry["q_detect"])
        if len(q_detect) != len(classes):
            raise ValueError(f"phase {phase}: expected {len(classes)} class probabilities")
        counts = tuple(counts_by_phase[phase].get(cls, 0) for cls in classes)
        detections.append(
            baseline_mod.PhaseDetection(
                counts=counts, q_detect=q_detect, q_none=float(q_entry["q_none"])
            )
        )
    if len(detections) != len(phases):
        raise ValueError("config 'q' must list one entry per detection phase")

    state = baseline_mod.initial_state(n_total, p0)
    per_phase = []
    for detection in detections:
        state = baseline_mod.baseline_update(state, detection)
        per_phase.append(
            {"phase": state.phase, "p_no_fault_remaining": baseline_mod.posterior_remaining(state, 0)}
        )
    stopping = baseline_mod.baseline_stopping_phase(detections, n_total, p0, delta)
    effective = {"detections_sha256": _file_sha256(args.detections), "config": raw_config}
    return {
        "command": "baseline",
        "seed": args.seed,
        "config_sha256": _config_hash(effective),
        "n_total": n_total,
        "p0": p0,
        "delta": delta,
        "per_phase": per_phase,
        "stopping_phase": stopping,
    }


def _cmd_compare(args) -> dict:
    raw_config = _load_config(args.scenario)
    comparison_raw = raw_config.pop("comparison", {})
    if raw_config:
        raw_config.setdefault("seed", args.seed)
        scenario = simulator_mod.ScenarioConfig.from_dict(raw_config)
    else:
        scenario = simulator_mod.default_scenario(args.seed)
    try:
        comparison = baseline_mod.ComparisonConfig(**comparison_raw)
    except TypeError as exc:
        raise ValueError(f"bad comparison config: {exc}") from None
    report_data = baseline_mod.compare_models(scenario, args.trials, args.seed, comparison)
    effective = {
        "scenario_sha256": _file_sha256(args.scenario) if args.scenario else "default",
        "trials": args.trials,
        "comparison": comparison_raw,
    }
    report = {
        "command": "compare",
        "seed": args.seed,
        "config_sha256": _config_hash(effective),
    }
    report.update(report_data.as_doc())
    return report


def _cmd_simulate(args) -> dict:
    raw_config = _load_config(args.scenario)
    if raw_config:
        raw_config.setdefault("seed", args.seed)
        scenario = simulator_mod.ScenarioConfig.from_dict(raw_config)
    else:
        scenario = simulator_mod.default_scenario(args.seed)
    log, truth = simulator_mod.generate(scenario)

    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["cycle", "defect_header", "defect_id", "size"])
            for record in log.records:
                writer.writerow([record.cycle, record.defect_header, record.defect_id, record.size])
    if args.truth_out:
        Path(args.truth_out).write_text(
            json.dumps(_jsonable(truth.as_doc()), indent=2) + "\n", encoding="utf-8"
        )

    effective = {"scenario_sha256": _file_sha256(args.scenario) if args.scenario else "default"}
    return {
        "command": "simulate",
        "seed": args.seed,
        "config_sha256": _config_hash(effective),
        "phases": scenario.phases,
        "records": len(log.records),
        "runs_per_phase": list(log.runs_per_phase),
    }


def build_parser() -> _Parser:
    parser = _Parser(prog="bugsize", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_common(sub):
        sub.add_argument("--seed", type=int, default=0, help="root seed for all randomness")
        sub.add_argument("--config", default=None, help="JSON config document")
        sub.add_argument("--out", default=None, help="write the report here instead of stdout")
        sub.add_argument("--format", choices=("doc", "table"), default="doc")
        sub.add_argument("--quiet", action="store_true")

    ingest_p = subparsers.add_parser("ingest", help="parse and aggregate a testing log")
    ingest_p.add_argument("--data", required=True)
    ingest_p.add_argument("--runs", default=None, help="comma-separated runs per phase")
    ingest_p.add_argument("--per-input", action="store_true", help="input is a raw per-input log")
    add_common(ingest_p)
    ingest_p.set_defaults(handler=_cmd_ingest)

    fit_p = subparsers.add_parser("fit", help="fit the size-biased model")
    fit_p.add_argument("--data", required=True)
    fit_p.add_argument("--runs", default=None)
    fit_p.add_argument("--per-input", action="store_true")
    fit_p.add_argument("--chains", type=int, default=2)
    fit_p.add_argument("--iterations", type=int, default=2000)
    fit_p.add_argument("--burn-in", type=int, default=500)
    fit_p.add_argument("--thin", type=int, default=1)
    fit_p.add_argument("--epsilon-floor", type=float, default=1e-12)
    fit_p.add_argument("--workers", type=int, default=1)
    fit_p.add_argument("--dump-draws", default=None, help="write retained draws as CSV")
    add_common(fit_p)
    fit_p.set_defaults(handler=_cmd_fit)

    predict_p = subparsers.add_parser("predict", help="predict the next phase's total")
    predict_p.add_argument("--totals", default=None)
    predict_p.add_argument("--from-report", default=None)
    predict_p.add_argument("--bandwidth", type=float, default=None)
    predict_p.add_argument("--temporal-rate", type=float, default=1.0)
    predict_p.add_argument("--cv-grid", default=None)
    predict_p.add_argument("--draws", default=None, help="draw dump used for bandwidth selection")
    predict_p.add_argument("--epsilon", type=float, default=None)
    add_common(predict_p)
    predict_p.set_defaults(handler=_cmd_predict)

    decide_p = subparsers.add_parser("decide", help="apply the epsilon stopping rule")
    decide_p.add_argument("--totals", default=None)
    decide_p.add_argument("--from-report", default=None)
    decide_p.add_argument("--epsilon", type=float, required=True)
    add_common(decide_p)
    decide_p.set_defaults(handler=_cmd_decide)

    baseline_p = subparsers.add_parser("baseline", help="run the detection-count model")
    baseline_p.add_argument("--detections", required=True, help="CSV with phase,class,count")
    add_common(baseline_p)
    baseline_p.set_defaults(handler=_cmd_baseline)

    compare_p = subparsers.add_parser("compare", help="compare both models on simulations")
    compare_p.add_argument("--trials", type=int, default=50)
    compare_p.add_argument("--scenario", default=None, help="scenario config JSON")
    add_common(compare_p)
    compare_p.set_defaults(handler=_cmd_compare)

    simulate_p = subparsers.add_parser("simulate", help="generate a synthetic log")
    simulate_p.add_argument("--scenario", default=None)
    simulate_p.add_argument("--out", dest="out", default=None, help="log CSV path")
    simulate_p.add_argument("--truth-out", default=None, help="ground-truth JSON path")
    simulate_p.add_argument("--seed", type=int, default=0)
    simulate_p.add_argument("--config", default=None)
    simulate_p.add_argument("--format", choices=("doc", "table"), default="doc")
    simulate_p.add_argument("--quiet", action="store_true")
    simulate_p.set_defaults(handler=_cmd_simulate)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        report = args.handler(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        # For simulate the --out flag names the log file, written by the
        # handler; its report always goes to stdout.
        out = None if report.get("command") == "simulate" else args.out
        emit_report(report, args.format, out, args.quiet)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
