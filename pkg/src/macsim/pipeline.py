"""End-to-end assessment runs: ingest, block, estimate, link, simulate, re-link."""

from __future__ import annotations

import dataclasses
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import synthgen
from .analytics import (COARSE_EDGES, FINE_EDGES, bin_report, correct_relink,
                        per_record_frame, per_sample_frame)
from .blocking import (RESIDUAL, BlockError, BlockingSpec, block_frames, block_manifest,
                       build_agreement, format_key, partition)
from .core import ParameterError, validate_all
from .estimation import EstimationError, estimate_params, params_frame, read_params, usable_fields
from .kernel import ChainConfig, block_seed, chain_rng, distance, iter_chain, ternary_counts
from .linker import composite_weights, greedy_link, link_block, weight_table
from .samplefile import SampleWriter, load_samples, read_header

log = logging.getLogger(__name__)

STAGES = ("block", "estimate", "link", "simulate", "assess")
TIMING_STAGES = ("agreement", "estimate", "observed_link", "simulate", "relink", "accuracy")


class RunConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    x_path: str | None = None
    y_path: str | None = None
    truth_path: str | None = None
    n_y: int | None = None
    scale: float = 1.0
    synth_seed: int | None = None
    blocking: tuple[str, ...] = ("sa1",)
    use_truth_values: bool = True
    linking_fields: tuple[str, ...] | None = None
    cutoff: float = 0.0
    steps: int = 1_000_000
    thin: int = 1000
    burn_in: int = 0
    seed: int = 0
    params_path: str | None = None
    out: str = "macsim_out"
    blocks: tuple[str, ...] | None = None
    use_saved_samples: str | None = None
    save_samples: bool = False
    drop_invalid_fields: bool = False
    smoothing: float = 0.0
    workers: int = 1

    def validate(self) -> None:
        files = self.x_path is not None or self.y_path is not None
        synth = self.n_y is not None
        if files == synth:
            raise RunConfigError("give either input files (x_path, y_path) or synthgen n_y, not both")
        if files:
            for p in (self.x_path, self.y_path, self.truth_path, self.params_path):
                if p is not None and not Path(p).exists():
                    raise RunConfigError(f"{p} does not exist")
            if self.x_path is None or self.y_path is None:
                raise RunConfigError("both x_path and y_path are required")
        if self.steps < 0 or self.thin < 1 or self.burn_in < 0 or self.workers < 1:
            raise RunConfigError("steps, thin, burn_in and workers must be positive")
        if self.use_saved_samples is not None and not Path(self.use_saved_samples).is_dir():
            raise RunConfigError(f"{self.use_saved_samples} is not a directory")
        self.chain()

    def chain(self) -> ChainConfig:
        try:
            return ChainConfig(self.steps, self.thin, self.burn_in, self.seed)
        except ValueError as exc:
            raise RunConfigError(str(exc)) from None

    def blocking_spec(self) -> BlockingSpec:
        return BlockingSpec(tuple(self.blocking), self.use_truth_values, self.linking_fields)


def _parse_bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise RunConfigError(f"not a boolean: {v!r}")


def _tuple(v: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in v.replace("&", ",").split(",") if p.strip())


_CONVERT = {
    "n_y": int, "synth_seed": int, "steps": int, "thin": int, "burn_in": int,
    "seed": int, "workers": int, "scale": float, "cutoff": float, "smoothing": float,
    "use_truth_values": _parse_bool, "save_samples": _parse_bool,
    "drop_invalid_fields": _parse_bool, "blocking": _tuple, "linking_fields": _tuple,
    "blocks": _tuple,
}


def coerce(key: str, value):
    names = {f.name for f in dataclasses.fields(RunConfig)}
    if key not in names:
        raise RunConfigError(f"unknown config key {key!r}")
    if value is None or not isinstance(value, str):
        return value
    if value.strip() == "" or value.strip().lower() == "none":
        return None
    return _CONVERT.get(key, str)(value.strip())


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RunConfigError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = coerce(k.replace("-", "_"), v)
    return out


def make_config(path=None, **overrides) -> RunConfig:
    values = read_config(path) if path else {}
    for k, v in overrides.items():
        if v is not None:
            values[k] = coerce(k, v)
    cfg = RunConfig(**values)
    return cfg


@dataclass
class BlockResult:
    key: str
    status: str
    reason: str = ""
    x_size: int = 0
    y_size: int = 0
    timings: dict = field(default_factory=dict)
    dropped_fields: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)


def load_inputs(cfg: RunConfig):
    """Return (x, y, truth) DataFrames from files or from the generator."""
    if cfg.n_y is not None:
        seed = cfg.seed if cfg.synth_seed is None else cfg.synth_seed
        y, x = synthgen.generate_population(cfg.n_y, cfg.scale, seed)
        sa1 = y["sa1"].astype("int64")
        spec = synthgen.ErrorSpec(seed=seed + 1, sa1_range=(int(sa1.min()), int(sa1.max())))
        x, truth = synthgen.inject_errors(x, spec)
        return x, y, truth
    x = synthgen.read_file(cfg.x_path)
    y = synthgen.read_file(cfg.y_path)
    truth = synthgen.read_truth(cfg.truth_path) if cfg.truth_path else None
    return x, y, truth


def _observed_frame(key: str, a, links) -> pd.DataFrame:
    return pd.DataFrame({
        "block": key,
        "x_recid": [a.x_ids[i] for i in links.x],
        "y_recid": [a.y_ids[j] for j in links.y],
        "weight": links.weight,
    })


def run_block(key: tuple, x_block: pd.DataFrame, y_block: pd.DataFrame, cfg: RunConfig,
              stage: str = "assess", external=None) -> BlockResult:
    name = format_key(key)
    res = BlockResult(name, "completed", x_size=len(x_block), y_size=len(y_block))
    spec = cfg.blocking_spec()
    tick = time.perf_counter

    t0 = tick()
    try:
        a = build_agreement(x_block, y_block, spec.linking_fields, key,
                            strict=cfg.use_truth_values)
    except (BlockError, ValueError) as exc:
        return dataclasses.replace(res, status="skipped", reason=f"agreement: {exc}")
    res.timings["agreement"] = tick() - t0
    res.x_size, res.y_size = a.x_size, a.y_size
    if stage == "block":
        return res

    t0 = tick()
    try:
        if external is not None:
            params = external.get(name) or external.get("*")
            if params is None:
                raise EstimationError(f"no external params for block {name}")
            if [p.name for p in params] != list(a.fields):
                raise EstimationError(f"external params fields {[p.name for p in params]} "
                                      f"do not match {list(a.fields)}")
        else:
            params = estimate_params(a, cfg.smoothing, validate=False)
        keep, dropped = usable_fields(params)
        if dropped and not cfg.drop_invalid_fields:
            raise ParameterError(dropped[0][1], dropped[0][0])
        if not keep:
            raise ParameterError("no usable linking fields")
        if dropped:
            res.dropped_fields = [d[0] for d in dropped]
            a = a.select_fields(keep)
            params = [params[k] for k in keep]
        validate_all(params)
    except (EstimationError, ParameterError) as exc:
        return dataclasses.replace(res, status="skipped", reason=f"estimation: {exc}")
    res.timings["estimate"] = tick() - t0
    res.tables["params"] = params_frame(name, params)
    if stage == "estimate":
        return res

    t0 = tick()
    observed = link_block(a, params, cfg.cutoff)
    res.timings["observed_link"] = tick() - t0
    res.tables["observed_links"] = _observed_frame(name, a, observed)
    if stage == "link":
        return res

    chain = cfg.chain()
    seed = block_seed(cfg.seed, key)
    t_sim = t_relink = 0.0
    dist, counts, linksets = [], [], []
    writer = None
    if cfg.use_saved_samples and stage == "assess":
        t0 = tick()
        path = Path(cfg.use_saved_samples) / f"{name}.macs"
        if not path.exists():
            return dataclasses.replace(res, status="skipped", reason=f"no saved samples at {path}")
        head = read_header(path)
        if (head["x_size"], head["y_size"], head["field_count"]) != a.cells.shape:
            return dataclasses.replace(res, status="skipped",
                                       reason=f"saved samples shape mismatch in {path}")
        stream = load_samples(path, a.truth_map)
        if not np.array_equal(stream.initial, a.cells):
            return dataclasses.replace(res, status="skipped",
                                       reason=f"saved initial state differs from block in {path}")
        frames = iter(stream.usable())
        t_sim += tick() - t0
    else:
        if cfg.save_samples or stage == "simulate":
            sample_dir = Path(cfg.out) / "samples"
            sample_dir.mkdir(parents=True, exist_ok=True)
            writer = SampleWriter(sample_dir / f"{name}.macs", a.cells.shape, chain.samples,
                                  chain.burn_in, chain.thin, seed)
            writer.write(a.cells)
        frames = iter_chain(a, params, chain, chain_rng(seed), include_burn_in=writer is not None)

    table = weight_table(params)
    s = 0
    while True:
        t0 = tick()
        cells = next(frames, None)
        if cells is not None and writer is not None:
            writer.write(cells)
        t_sim += tick() - t0
        if cells is None:
            break
        s += 1
        if writer is not None and s <= chain.burn_in:
            continue
        dist.append(distance(cells, a))
        counts.append(ternary_counts(cells))
        if stage == "assess":
            t0 = tick()
            linksets.append(greedy_link(composite_weights(cells, table=table), cfg.cutoff))
            t_relink += tick() - t0
    if writer is not None:
        writer.close()
    res.timings["simulate"] = t_sim
    idx = np.arange(1, len(dist) + 1)
    cnt = np.asarray(counts, dtype=np.int64).reshape(-1, 3)
    res.tables["fig3_distance"] = pd.DataFrame({"block": name, "x": idx, "y": dist})
    res.tables["fig4_counts"] = pd.DataFrame({"block": name, "x": idx, "agree": cnt[:, 0],
                                              "disagree": cnt[:, 1]})
    if stage == "simulate":
        return res

    res.timings["relink"] = t_relink
    t0 = tick()
    rep = correct_relink(observed, linksets, a.truth_map)
    res.timings["accuracy"] = tick() - t0
    res.tables["per_record"] = per_record_frame(name, a.x_ids, rep)
    res.tables["per_sample"] = per_sample_frame(name, rep)
    target = observed.partner()
    res.tables["per_record_truth"] = pd.DataFrame({
        "block": name,
        "recid": list(a.x_ids),
        "observed_is_true_match": target == a.truth_map,
        "truth_relink_proportion": rep.truth_per_record,
    })
    res.tables["unlinked"] = pd.DataFrame({"block": name,
                                           "recid": [a.x_ids[i] for i in rep.unlinked]})
    res.tables["fig6_per_record"] = pd.DataFrame({"block": name, "x": np.arange(1, a.x_size + 1),
                                                  "y": rep.per_record})
    res.tables["fig7_per_sample"] = pd.DataFrame({"block": name,
                                                  "x": np.arange(1, rep.samples + 1),
                                                  "y": rep.per_sample})
    return res


_WORKER: dict = {}


def _init_worker(x, y, blocks, cfg, stage, external):
    _WORKER.update(x=x, y=y, blocks=blocks, cfg=cfg, stage=stage, external=external)


def _run_one(key):
    w = _WORKER
    xb, yb = block_frames(w["x"], w["y"], w["blocks"], key)
    return run_block(key, xb, yb, w["cfg"], w["stage"], w["external"])


OUTPUTS = {
    "params": "params.csv",
    "observed_links": "observed_links.csv",
    "fig3_distance": "fig3_distance.csv",
    "fig4_counts": "fig4_counts.csv",
    "per_record": "per_record.csv",
    "per_sample": "per_sample.csv",
    "per_record_truth": "per_record_truth.csv",
    "unlinked": "unlinked.csv",
    "fig6_per_record": "fig6_per_record.csv",
    "fig7_per_sample": "fig7_per_sample.csv",
}


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, lineterminator="\n")


@dataclass
class RunResult:
    exit_status: int
    results: list[BlockResult]
    out: Path
    timings: dict


def run_assessment(cfg: RunConfig, stage: str = "assess") -> RunResult:
    """Run the assessment (or stop after ``stage``) and write every report."""
    if stage not in STAGES:
        raise RunConfigError(f"unknown stage {stage!r}")
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    x, y, truth = load_inputs(cfg)
    t_load = time.perf_counter() - t0
    t0 = time.perf_counter()
    blocks = partition(x, y, cfg.blocking_spec(), truth)
    t_part = time.perf_counter() - t0
    _write_csv(block_manifest(blocks), out / "blocks.csv")

    keys = blocks.keys()
    if cfg.blocks:
        wanted = [tuple(k.split("_")) for k in cfg.blocks]
        unknown = [format_key(k) for k in wanted if k not in blocks.blocks]
        if unknown:
            raise RunConfigError(f"unknown block keys {unknown}")
        keys = [k for k in keys if k in set(wanted)]
    external = read_params(cfg.params_path) if cfg.params_path else None

    results: list[BlockResult] = []
    runnable = []
    for k in keys:
        xi, _ = blocks.blocks[k]
        if len(xi) == 0:
            results.append(BlockResult(format_key(k), "skipped", "no X records",
                                       0, len(blocks.blocks[k][1])))
        else:
            runnable.append(k)
    if cfg.workers > 1 and len(runnable) > 1:
        with ProcessPoolExecutor(cfg.workers, initializer=_init_worker,
                                 initargs=(x, y, blocks, cfg, stage, external)) as pool:
            results.extend(pool.map(_run_one, runnable))
    else:
        for k in runnable:
            xb, yb = block_frames(x, y, blocks, k)
            r = run_block(k, xb, yb, cfg, stage, external)
            log.info("block %s: %s %s", r.key, r.status, r.reason)
            results.append(r)
    order = {format_key(k): n for n, k in enumerate(keys)}
    results.sort(key=lambda r: order[r.key])

    done = [r for r in results if r.status == "completed"]
    for name, fname in OUTPUTS.items():
        frames = [r.tables[name] for r in done if name in r.tables]
        if frames:
            _write_csv(pd.concat(frames, ignore_index=True), out / fname)
    if stage == "assess" and done:
        per_record = pd.concat([r.tables["per_record"] for r in done], ignore_index=True)
        props = per_record["proportion"].to_numpy()
        _write_csv(bin_report(props, COARSE_EDGES), out / "bins.csv")
        _write_csv(bin_report(props, FINE_EDGES), out / "bins_fine.csv")

    timings = {"load": t_load, "partition": t_part}
    for st in TIMING_STAGES:
        timings[st] = sum(r.timings.get(st, 0.0) for r in results)
    timings["total"] = time.perf_counter() - t_start
    status = 0 if done else 1
    write_manifest(out / "manifest.txt", cfg, stage, blocks, results, timings, status)
    return RunResult(status, results, out, timings)


def write_manifest(path: Path, cfg: RunConfig, stage: str, blocks, results, timings, status):
    lines = [f"run.stage={stage}", f"run.seed={cfg.seed}", f"run.exit_status={status}"]
    for f in dataclasses.fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(v)
        lines.append(f"config.{f.name}={'' if v is None else v}")
    lines.append(f"run.blocks_total={len(results)}")
    lines.append(f"run.blocks_completed={sum(r.status == 'completed' for r in results)}")
    lines.append(f"run.blocks_skipped={sum(r.status != 'completed' for r in results)}")
    if len(blocks.residual_x) or len(blocks.residual_y):
        lines.append(f"residual.key={format_key(RESIDUAL)}")
        lines.append(f"residual.x_size={len(blocks.residual_x)}")
        lines.append(f"residual.y_size={len(blocks.residual_y)}")
        lines.append("residual.status=excluded")
    for k, v in timings.items():
        lines.append(f"time.{k}={v:.6f}")
    for r in results:
        p = f"block.{r.key}"
        lines.append(f"{p}.status={r.status}")
        if r.reason:
            lines.append(f"{p}.reason={r.reason.replace(chr(10), ' ')}")
        lines.append(f"{p}.x_size={r.x_size}")
        lines.append(f"{p}.y_size={r.y_size}")
        if r.dropped_fields:
            lines.append(f"{p}.dropped_fields={','.join(r.dropped_fields)}")
        for st, v in r.timings.items():
            lines.append(f"{p}.time.{st}={v:.6f}")
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def report(per_record_csv, out_dir, edges=COARSE_EDGES, fine_edges=FINE_EDGES) -> None:
    """Rebuild the binned tables from an existing per-record CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    props = pd.read_csv(per_record_csv)["proportion"].to_numpy()
    _write_csv(bin_report(props, edges), out / "bins.csv")
    _write_csv(bin_report(props, fine_edges), out / "bins_fine.csv")
