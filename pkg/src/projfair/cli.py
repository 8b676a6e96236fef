"""Command-line entry point: ``projfair generate|train|eval|traverse|sweep|gradcheck``.

Every command except ``gradcheck`` reads an INI-style config file with flat
sections. Relative paths inside the config resolve against the config file's
directory. Each run writes ``manifest_<command>.ini`` into the output directory; it
echoes the resolved config and the SHA-256 of every artifact.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from projfair import evalkit, gradsuite, plotting, synthdata, traverse
from projfair import model as md
from projfair.losses import DegenerateBatch, pearson_corr
from projfair.seeding import subseed
from projfair.trainer import TrainConfig, TrainingAborted, train, write_history_csv

log = logging.getLogger("projfair")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


SCHEMA = {
    "run": {"seed", "out", "jobs"},
    "generate": {"preset", "d", "m", "attributes", "corr", "signal", "noise", "seed", "labelled_fraction"},
    "data": {"path"},
    "model": {"latent_dim", "enc_hidden", "dec_hidden", "activation", "latent_activation"},
    "train": {"epochs", "batch_size", "lr", "eta", "lambda", "mode", "target", "biases", "eps_v"},
    "eval": {"folds", "methods", "stratify", "checkpoint"},
    "traverse": {"checkpoint", "frames", "schedule", "low", "high", "rows"},
    "sweep": {"biases", "folds"},
}

METHOD_MODES = {
    "fair": "supervised",
    "fair_ssl": "semi_supervised",
    "ablation_no_bias": "ablation_no_bias",
    "ablation_plain_ae": "ablation_plain_ae",
}

PRESETS = {"experiment1": synthdata.experiment1_spec, "experiment2": synthdata.experiment2_spec}


# --------------------------------------------------------------------------
# config handling


class RunConfig:
    """Parsed config file plus command-line overrides."""

    def __init__(self, path, seed_override=None, out_override=None, jobs_override=None):
        self.path = Path(path)
        if not self.path.is_file():
            raise ConfigError(f"config file {self.path} not found")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(self.path)
        except configparser.Error as exc:
            raise ConfigError(f"{self.path}: {exc}") from exc
        self.sections: dict[str, dict[str, str]] = {}
        for name in parser.sections():
            if name not in SCHEMA:
                raise ConfigError(f"unknown section [{name}]")
            values = dict(parser.items(name))
            unknown = sorted(set(values) - SCHEMA[name])
            if unknown:
                raise ConfigError(f"unknown key(s): {', '.join(f'{name}.{k}' for k in unknown)}")
            self.sections[name] = values
        run = self.sections.setdefault("run", {})
        if seed_override is not None:
            run["seed"] = str(seed_override)
        if out_override is not None:
            run["out"] = str(out_override)
        if jobs_override is not None:
            run["jobs"] = str(jobs_override)
        run.setdefault("seed", "0")
        run.setdefault("jobs", "1")
        self.seed = self.get_int("run", "seed")
        self.jobs = max(1, self.get_int("run", "jobs"))
        if "out" not in run:
            raise ConfigError("run.out is required (or pass --out)")
        self.out = self.resolve(run["out"])

    def section(self, name) -> dict[str, str]:
        return self.sections.get(name, {})

    def resolve(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else (self.path.parent / p)

    def get(self, section, key, default=None):
        return self.section(section).get(key, default)

    def require(self, section, key):
        value = self.get(section, key)
        if value is None:
            raise ConfigError(f"missing required key {section}.{key}")
        return value

    def _typed(self, section, key, default, cast, what):
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing required key {section}.{key}")
            return default
        try:
            return cast(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected {what}, got {raw!r}") from None

    def get_int(self, section, key, default=None):
        return self._typed(section, key, default, int, "an integer")

    def get_float(self, section, key, default=None):
        return self._typed(section, key, default, float, "a number")

    def get_list(self, section, key, default=None):
        raw = self.get(section, key)
        if raw is None:
            return list(default) if default is not None else []
        return [x.strip() for x in raw.split(",") if x.strip()]

    def echo(self) -> dict[str, dict[str, str]]:
        return {name: dict(sorted(values.items())) for name, values in sorted(self.sections.items())}


def gen_spec(cfg: RunConfig) -> synthdata.GenSpec:
    section = dict(cfg.section("generate"))
    if not section:
        raise ConfigError("missing [generate] section")
    preset = section.pop("preset", None)
    seed = int(section.pop("seed")) if "seed" in section else subseed(cfg.seed, "generation") % 2**31
    try:
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"generate.preset: unknown preset {preset!r}")
            base = PRESETS[preset](seed=seed).to_config()
            base.update(section)
            base["seed"] = str(seed)
            return synthdata.GenSpec.from_config(base)
        section["seed"] = str(seed)
        return synthdata.GenSpec.from_config(section)
    except synthdata.NotPSD:
        raise
    except (synthdata.SpecError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"generate: {exc}") from exc


def architecture(cfg: RunConfig, input_dim: int) -> md.Architecture:
    def widths(key, default):
        return tuple(int(w) for w in cfg.get_list("model", key, default))

    try:
        return md.Architecture(
            input_dim=input_dim,
            latent_dim=cfg.get_int("model", "latent_dim", 32),
            enc_hidden=widths("enc_hidden", ["64"]),
            dec_hidden=widths("dec_hidden", ["64"]),
            activation=cfg.get("model", "activation", "tanh"),
            latent_activation=cfg.get("model", "latent_activation", "tanh"),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def train_config(cfg: RunConfig, mode=None, biases=None) -> TrainConfig:
    try:
        return TrainConfig(
            epochs=cfg.get_int("train", "epochs", 600),
            batch_size=cfg.get_int("train", "batch_size", 64),
            lr=cfg.get_float("train", "lr", 1e-3),
            eta=cfg.get_float("train", "eta", 0.5),
            lam=cfg.get_float("train", "lambda", 1.0),
            seed=subseed(cfg.seed, "train") % 2**31,
            mode=mode or cfg.get("train", "mode", "supervised"),
            target=cfg.require("train", "target"),
            biases=tuple(biases if biases is not None else cfg.get_list("train", "biases")),
            eps_v=cfg.get_float("train", "eps_v", 1e-8),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"train: {exc}") from exc


def load_dataset(cfg: RunConfig) -> synthdata.Dataset:
    path = cfg.resolve(cfg.require("data", "path"))
    if not path.is_file():
        raise DataError(f"dataset {path} not found")
    return synthdata.read_csv(path)


def check_attributes(dataset, config: TrainConfig):
    missing = [a for a in (config.target, *config.biases) if a not in dataset.attributes]
    if missing:
        raise ConfigError(f"train: attribute(s) not in dataset: {', '.join(missing)}")


# --------------------------------------------------------------------------
# output helpers


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _atomic_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic(path: Path, writer):
    """Call ``writer(tmp_path)`` then move the result into place."""
    tmp = path.with_name(f".{path.stem}.tmp{path.suffix}")
    writer(tmp)
    os.replace(tmp, path)
    return path


def write_manifest(out: Path, command: str, cfg: RunConfig, artifacts: list[Path], results=None):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["command"] = {"name": command, "seed": str(cfg.seed)}
    for name, values in cfg.echo().items():
        if name == "run":
            values = {k: v for k, v in values.items() if k not in ("out", "jobs")}
        parser[f"config.{name}"] = values
    for name, values in (results or {}).items():
        parser[name] = {k: str(v) for k, v in values.items()}
    parser["artifacts"] = {p.name: _sha256(p) for p in sorted(artifacts, key=lambda p: p.name)}
    tmp = out / f".manifest_{command}.tmp"
    with open(tmp, "w") as fh:
        parser.write(fh)
    os.replace(tmp, out / f"manifest_{command}.ini")


def _fmt(v) -> str:
    return format(float(v), ".17g")


# --------------------------------------------------------------------------
# commands


def cmd_generate(cfg: RunConfig) -> int:
    spec = gen_spec(cfg)
    dataset = synthdata.generate(spec)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    csv_path = _atomic(out / "dataset.csv", lambda p: synthdata.write_csv(dataset, p))
    names = list(dataset.attributes)
    lab = dataset.labelled
    A = np.column_stack([dataset.attributes[n][lab] for n in names])
    emp = np.corrcoef(A.T)
    results = {
        "generate": {"seed": spec.seed, "rows": len(dataset), "features": dataset.m,
                     "labelled_rows": int(lab.sum())},
        "empirical_correlation": {
            f"{names[i]}.{names[j]}": _fmt(emp[i, j])
            for i in range(len(names)) for j in range(i + 1, len(names))
        },
        "wiring": {k: " ".join(map(str, v)) for k, v in dataset.provenance["wiring"].items()},
    }
    write_manifest(out, "generate", cfg, [csv_path], results)
    print(f"wrote {csv_path} ({len(dataset)} rows, {dataset.m} features)")
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    dataset = load_dataset(cfg)
    config = train_config(cfg)
    check_attributes(dataset, config)
    arch = architecture(cfg, dataset.m)
    params, history = train(dataset, arch, config)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    ck = _atomic(out / "checkpoint.bin", lambda p: md.save_checkpoint(params, arch, p))
    hist = _atomic(out / "history.csv", lambda p: write_history_csv(history, p))
    fig = _atomic(out / "history.png", lambda p: plotting.plot_history(history, p, title=config.mode))
    info = {
        "mode": config.mode,
        "epochs": len(history),
        "final_rec_train": _fmt(history.rec_train[-1]),
        "final_corr_train": _fmt(history.corr_train[-1]),
        "skipped_batches": sum(history.skipped_batches),
        "nonfinite_steps": sum(history.nonfinite_steps),
        "p_reinitialisations": history.notes.get("p_reinitialisations", 0),
    }
    if config.mode == "semi_supervised":
        info["n_sample"] = history.notes.get("n_sample", int(dataset.labelled.sum()))
        info["phases_per_epoch"] = history.phases[-1]
    if config.mode == "ablation_plain_ae":
        from projfair.model import init_params
        initial = init_params(arch, subseed(config.seed, "init"))
        info["p_untouched"] = bool(np.array_equal(initial.P, params.P))
    write_manifest(out, "train", cfg, [ck, hist, fig], {"train": info})
    print(f"wrote {ck}, {hist}")
    return EXIT_OK


def _single_model_report(cfg, dataset, config):
    ck_path = cfg.resolve(cfg.get("eval", "checkpoint"))
    if not ck_path.is_file():
        raise DataError(f"checkpoint {ck_path} not found")
    expect = None
    if cfg.get("model", "latent_dim") is not None:
        expect = architecture(cfg, dataset.m)
    params, arch = md.load_checkpoint(ck_path)
    if expect is not None and (expect.latent_dim != arch.latent_dim or expect.input_dim != arch.input_dim):
        raise md.CheckpointError(
            f"checkpoint has m={arch.input_dim}, n={arch.latent_dim}; "
            f"config requests m={expect.input_dim}, n={expect.latent_dim}"
        )
    if arch.input_dim != dataset.m:
        raise md.CheckpointError(f"checkpoint expects {arch.input_dim} features, dataset has {dataset.m}")
    lab = dataset.subset(np.flatnonzero(dataset.labelled))
    Z = md.encode(params, lab.X, arch)
    t = lab.attributes[config.target]
    binary = evalkit.is_binary(t)
    zp = md.project(Z, params.P)
    pred = evalkit.fit_predictor(zp, t, "logistic" if binary else "linear")
    t_hat = pred.score(zp)
    corr = {}
    for b in config.biases:
        mag, sign = evalkit.signed_bias_corr(t_hat, lab.attributes[b])
        corr[b] = mag if sign == "+" else -mag
    fold = evalkit.FoldResult(
        fold=1, metric_name="AUC" if binary else "R-MSE",
        accuracy=evalkit.auc(t_hat, t) if binary else evalkit.rmse(t_hat, t),
        bias_corr=corr,
        rec_error=evalkit.rec_error_l1(lab.X, md.decode(params, Z, arch)),
        diversity=evalkit.latent_corr_matrix(Z).mean_abs_offdiag,
        n_train=len(lab), n_test=len(lab),
    )
    rep = evalkit.EvalReport("checkpoint", config.target, list(config.biases), fold.metric_name, [fold])
    return [rep], {"checkpoint": Z}


def _run_methods(cfg, dataset, methods, k, stratify):
    arch = architecture(cfg, dataset.m)
    reports, latents = [], {}
    folds_seed = subseed(cfg.seed, "folds") % 2**31
    for method in methods:
        config = train_config(cfg, mode=METHOD_MODES[method])
        check_attributes(dataset, config)
        rep = evalkit.cross_validate(dataset, arch, config, k=k, seed=folds_seed, method=method,
                                     stratify_on=stratify, jobs=cfg.jobs, keep_models=True)
        # fold-1 latent correlation matrix for the diversity figure
        params, _ = rep.models[0]
        fold1 = synthdata.kfold_split(dataset, k, folds_seed, stratify_on=stratify)[0]
        Z = md.encode(params, dataset.X[fold1.test], arch)
        latents[method] = evalkit.latent_corr_matrix(Z).matrix
        rep.models = []
        reports.append(rep)
    return reports, latents


def cmd_eval(cfg: RunConfig) -> int:
    dataset = load_dataset(cfg)
    k = cfg.get_int("eval", "folds", 5)
    stratify = cfg.get("eval", "stratify")
    if cfg.get("eval", "checkpoint") is not None:
        config = train_config(cfg)
        check_attributes(dataset, config)
        reports, latents = _single_model_report(cfg, dataset, config)
        latents = {"checkpoint": evalkit.latent_corr_matrix(latents["checkpoint"]).matrix}
    else:
        methods = cfg.get_list("eval", "methods", ["fair", "ablation_no_bias", "ablation_plain_ae"])
        unknown = [m for m in methods if m not in METHOD_MODES]
        if unknown:
            raise ConfigError(f"eval.methods: unknown method(s) {', '.join(unknown)}")
        reports, latents = _run_methods(cfg, dataset, methods, k, stratify)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    table = evalkit.format_table(reports, dataset)
    paths = [
        _atomic(out / "report.csv", lambda p: evalkit.write_report_csv(reports, p)),
        _atomic(out / "table.txt", lambda p: p.write_text(table)),
        _atomic(out / "latent_correlation.png", lambda p: plotting.plot_latent_correlations(latents, p)),
    ]
    if any(not np.isnan(r.aggregate().accuracy) for r in reports):
        paths.append(_atomic(out / "bias_correlation.png", lambda p: plotting.plot_bias_correlations(reports, p)))
    results = {
        f"method.{r.method}": {
            "folds": len(r.folds),
            r.metric_name: _fmt(r.aggregate().accuracy),
            **{f"mean_abs_corr.{b}": _fmt(v) for b, v in r.mean_abs_bias_corr().items()},
            "rec_error_l1": _fmt(r.aggregate().rec_error),
            "latent_mean_abs_corr": _fmt(r.aggregate().diversity),
        }
        for r in reports
    }
    write_manifest(out, "eval", cfg, paths, results)
    sys.stdout.write(table)
    return EXIT_OK


def _traversal_inputs(cfg, dataset, params, arch, config, rows):
    lab = dataset.subset(np.flatnonzero(dataset.labelled))
    zp_lab = md.project(md.encode(params, lab.X, arch), params.P)
    t = lab.attributes[config.target]
    predictor = evalkit.fit_predictor(zp_lab, t, "logistic" if evalkit.is_binary(t) else "linear")
    Z_rows = md.encode(params, dataset.X[rows], arch)
    return predictor, Z_rows


def _schedule(cfg, predictor, Z_rows, params):
    d_bar = traverse.mean_latent(Z_rows)
    zp_rows = md.project(Z_rows, params.P)
    mode = cfg.get("traverse", "schedule", "sigma_range")
    h = cfg.get_int("traverse", "frames", traverse.DEFAULT_FRAMES)
    bounds = None
    if mode == "target_range":
        bounds = (cfg.get_float("traverse", "low"), cfg.get_float("traverse", "high"))
    try:
        k = traverse.k_schedule(zp_rows, h, mode, float(np.linalg.norm(params.P)), predictor=predictor,
                                zp_ref=float(md.project(d_bar, params.P)[0]), bounds=bounds)
    except ValueError as exc:
        raise ConfigError(f"traverse: {exc}") from exc
    return d_bar, k


def cmd_traverse(cfg: RunConfig) -> int:
    dataset = load_dataset(cfg)
    ck_path = cfg.resolve(cfg.require("traverse", "checkpoint"))
    if not ck_path.is_file():
        raise DataError(f"checkpoint {ck_path} not found")
    params, arch = md.load_checkpoint(ck_path)
    if arch.input_dim != dataset.m:
        raise md.CheckpointError(f"checkpoint expects {arch.input_dim} features, dataset has {dataset.m}")
    config = train_config(cfg)
    check_attributes(dataset, config)
    which = cfg.get("traverse", "rows", "all")
    selector = {"all": np.ones(len(dataset), bool), "labelled": dataset.labelled, "unlabelled": ~dataset.labelled}
    if which not in selector:
        raise ConfigError(f"traverse.rows: expected all, labelled or unlabelled, got {which!r}")
    rows = np.flatnonzero(selector[which])
    predictor, Z_rows = _traversal_inputs(cfg, dataset, params, arch, config, rows)
    d_bar, k = _schedule(cfg, predictor, Z_rows, params)
    result = traverse.run_traversal(params, arch, predictor, d_bar, k)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    frames, diff = traverse.export_traversal(result, out)
    wiring = dataset.provenance.get("wiring")
    fig = _atomic(out / "traversal.png", lambda p: plotting.plot_traversal(result, p, wiring, config.target))
    info = {"frames": len(k), "k_first": _fmt(k[0]), "k_last": _fmt(k[-1]),
            "t_hat_first": _fmt(result.t_hat[0]), "t_hat_last": _fmt(result.t_hat[-1])}
    write_manifest(out, "traverse", cfg, [frames, diff, fig], {"traverse": info})
    print(f"wrote {frames}, {diff}")
    return EXIT_OK


def _sweep_setting(args):
    dataset, arch, config, k, folds_seed, eval_biases = args
    rep = evalkit.cross_validate(dataset, arch, config, k=k, seed=folds_seed,
                                 method=f"{len(config.biases)}", eval_biases=eval_biases, keep_models=True)
    params, _ = rep.models[0]
    rep.models = [params]
    return rep


def cmd_sweep(cfg: RunConfig) -> int:
    dataset = load_dataset(cfg)
    order = cfg.get_list("sweep", "biases") or cfg.get_list("train", "biases")
    if not order:
        raise ConfigError("sweep.biases: ordered bias list required")
    k = cfg.get_int("sweep", "folds", cfg.get_int("eval", "folds", 5))
    arch = architecture(cfg, dataset.m)
    folds_seed = subseed(cfg.seed, "folds") % 2**31
    tasks = []
    for n in range(len(order) + 1):
        mode = "ablation_no_bias" if n == 0 else "supervised"
        config = train_config(cfg, mode=mode, biases=order[:n])
        check_attributes(dataset, train_config(cfg, biases=order))
        tasks.append((dataset, arch, config, k, folds_seed, order))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            reports = list(pool.map(_sweep_setting, tasks))
    else:
        reports = [_sweep_setting(t) for t in tasks]

    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    fold1 = synthdata.kfold_split(dataset, k, folds_seed)[0]
    config = train_config(cfg, biases=order)
    paths, settings = [], []
    for n, rep in enumerate(reports):
        label = "none" if n == 0 else "+".join(order[:n])
        settings.append((label, rep.mean_abs_bias_corr()))
        params = rep.models[0]
        predictor, Z_rows = _traversal_inputs(cfg, dataset, params, arch, config, fold1.test)
        d_bar, ks = _schedule(cfg, predictor, Z_rows, params)
        result = traverse.run_traversal(params, arch, predictor, d_bar, ks)
        paths += list(traverse.export_traversal(result, out, prefix=f"sweep_{n}"))

    def write_rows(path):
        with open(path, "w") as fh:
            head = ["setting", "n_biases", "corrected", reports[0].metric_name,
                    *[f"corr_{b}" for b in order], *[f"abs_corr_{b}" for b in order],
                    "sum_abs_corr", "rec_error_l1"]
            fh.write(",".join(head) + "\n")
            for n, (rep, (label, abs_corr)) in enumerate(zip(reports, settings)):
                agg = rep.aggregate()
                row = [str(n), str(n), label, _fmt(agg.accuracy),
                       *[_fmt(agg.bias_corr[b]) for b in order], *[_fmt(abs_corr[b]) for b in order],
                       _fmt(sum(abs_corr.values())), _fmt(agg.rec_error)]
                fh.write(",".join(row) + "\n")

    paths.append(_atomic(out / "sweep.csv", write_rows))
    paths.append(_atomic(out / "sweep.png", lambda p: plotting.plot_sweep(settings, order, p)))
    results = {"sweep": {"settings": len(reports), "order": ", ".join(order)}}
    write_manifest(out, "sweep", cfg, paths, results)
    for label, abs_corr in settings:
        print(f"{label:<40} " + " ".join(f"{b}={v:.3f}" for b, v in abs_corr.items()))
    return EXIT_OK


def cmd_gradcheck(out: Path | None = None, configurations: int = 100) -> int:
    results, seconds = gradsuite.timed_run(configurations)
    text = gradsuite.format_results(results, seconds)
    sys.stdout.write(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _atomic_text(out / "gradcheck.txt", gradsuite.format_results(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


# --------------------------------------------------------------------------


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "traverse": cmd_traverse,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="projfair", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "gradcheck"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=name != "gradcheck")
        p.add_argument("--out", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        if name == "gradcheck":
            p.add_argument("--configurations", type=int, default=100)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args.out, args.configurations)
        cfg = RunConfig(args.config, args.seed, args.out, args.jobs)
        return COMMANDS[args.command](cfg)
    except (ConfigError, synthdata.SpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, synthdata.DataFormatError, md.CheckpointError, FileNotFoundError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingAborted, DegenerateBatch, md.DegenerateDirection, evalkit.DegenerateInput,
            FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        # fold failures are wrapped with their fold index
        cause = exc.__cause__
        code = EXIT_NUMERIC if isinstance(cause, (TrainingAborted, DegenerateBatch)) else EXIT_DATA
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
