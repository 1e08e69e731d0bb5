"""Pipeline CLI: every stage as a subcommand over shared JSONL artifacts.

Config precedence is flags > environment > config file (INI sections).
Every artifact embeds the config digest and seed that produced it.
Exit codes: 0 success, 2 validation error, 3 endpoint failure.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import captions as cap
from .bench import MetricReport, average_rank, run_benchmark
from .client import ChatClient, EndpointError
from .curation import (
    CurationCollapseError,
    CurationParams,
    curate,
    read_embeddings,
)
from .filters import FilterReport, filter_for_image
from .geo import BBox, ImageRecord
from .ingest import (
    OsmObject,
    RemoteError,
    SpatialIndex,
    fetch_remote,
    load_extract,
)
from .relabel import LabelCache, relabel_corpus
from .render import StyleTable, render_tile

EXIT_VALIDATION = 2
EXIT_ENDPOINT = 3

log = logging.getLogger("osmda")


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _setup_logging():
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        logging.Formatter('{"level": "%(levelname)s", "logger": "%(name)s", '
                          '"message": "%(message)s"}')
    )
    root = logging.getLogger()
    if not root.handlers:
        root.addHandler(handler)
        root.setLevel(logging.INFO)


class Config:
    """Resolved configuration with flags > env > file precedence."""

    ENV_KEYS = {
        "osm_endpoint": "OSMDA_OSM_ENDPOINT",
        "llm_endpoint": "OSMDA_LLM_ENDPOINT",
        "vlm_endpoint": "OSMDA_VLM_ENDPOINT",
        "judge_endpoint": "OSMDA_JUDGE_ENDPOINT",
    }

    def __init__(self, config_path: str | None, flags: dict):
        self._file: dict[str, str] = {}
        if config_path:
            parser = configparser.ConfigParser()
            if not parser.read(config_path):
                _fail(EXIT_VALIDATION, f"config file {config_path} not readable")
            for section in parser.sections():
                for key, value in parser.items(section):
                    self._file[key] = value
        self._flags = {k: v for k, v in flags.items() if v is not None}

    def get(self, key: str, default=None):
        if key in self._flags:
            return self._flags[key]
        env_key = self.ENV_KEYS.get(key)
        if env_key:
            import os

            if env_key in os.environ:
                return os.environ[env_key]
        return self._file.get(key, default)

    def digest(self, exclude: tuple = ()) -> str:
        keys = sorted({*self._file, *self._flags} - set(exclude))
        resolved = {k: str(self.get(k)) for k in keys}
        return hashlib.sha256(
            json.dumps(resolved, sort_keys=True).encode("utf-8")
        ).hexdigest()[:16]


def write_artifact(path: Path, records, meta: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"__meta__": meta}, sort_keys=True) + "\n")
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_artifact(path: Path, producer: str) -> tuple[dict, list[dict]]:
    if not path.exists():
        _fail(
            EXIT_VALIDATION,
            f"missing upstream artifact {path}; run the `{producer}` "
            f"subcommand first",
        )
    meta, records = {}, []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            if "__meta__" in d:
                meta = d["__meta__"]
            else:
                records.append(d)
    return meta, records


def load_images_manifest(path: str) -> list[ImageRecord]:
    p = Path(path)
    if not p.exists():
        _fail(EXIT_VALIDATION, f"images manifest {path} not found")
    records = []
    with open(p, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            records.append(
                ImageRecord(
                    id=str(d["id"]),
                    footprint=BBox(*d["footprint"]),
                    width_px=int(d["width_px"]),
                    height_px=int(d["height_px"]),
                    resolution_m=float(d["resolution_m"]),
                    image_path=d.get("image_path", ""),
                )
            )
    return sorted(records, key=lambda r: r.id)


def _meta(cfg: Config, seed) -> dict:
    return {"config_digest": cfg.digest(), "seed": seed}


@click.group()
def main():
    """OSM-grounded caption pipeline and benchmark harness."""
    _setup_logging()


def common_options(fn):
    fn = click.option("--config", "config_path", default=None,
                      help="INI config file")(fn)
    fn = click.option("--out-dir", default=None, help="artifact directory")(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option("--jobs", type=int, default=None,
                      help="worker cap for parallel stages")(fn)
    return fn


def _resolve(cfg: Config):
    out_dir = cfg.get("out_dir")
    if not out_dir:
        _fail(EXIT_VALIDATION, "out_dir is required (flag --out-dir or config)")
    return Path(out_dir)


@main.command()
@common_options
@click.option("--images-manifest", default=None)
@click.option("--osm-extract", default=None, help="OSM XML or JSONL extract file")
@click.option("--osm-endpoint", default=None, help="remote bbox query endpoint")
def ingest(config_path, out_dir, seed, jobs, images_manifest, osm_extract,
           osm_endpoint):
    """Acquire OSM objects per image footprint."""
    cfg = Config(config_path, {
        "out_dir": out_dir, "seed": seed, "images_manifest": images_manifest,
        "osm_extract": osm_extract, "osm_endpoint": osm_endpoint,
    })
    out = _resolve(cfg)
    manifest = cfg.get("images_manifest")
    if not manifest:
        _fail(EXIT_VALIDATION, "images_manifest is required")
    images = load_images_manifest(manifest)

    extract = cfg.get("osm_extract")
    endpoint = cfg.get("osm_endpoint")
    records = []
    if extract:
        if not Path(extract).exists():
            _fail(EXIT_VALIDATION, f"OSM extract {extract} not found")
        loaded = load_extract(extract)
        index = SpatialIndex(loaded.objects)
        for rec in images:
            objs = index.query(rec.footprint)
            records.append(
                {"image_id": rec.id, "objects": [o.to_json() for o in objs]}
            )
    elif endpoint:
        try:
            for rec in images:
                objs = fetch_remote(endpoint, rec.footprint)
                objs.sort(key=lambda o: o.osm_id)
                records.append(
                    {"image_id": rec.id, "objects": [o.to_json() for o in objs]}
                )
        except RemoteError as e:
            _fail(EXIT_ENDPOINT, f"OSM endpoint failed: {e}")
    else:
        _fail(EXIT_VALIDATION, "either osm_extract or osm_endpoint is required")

    write_artifact(out / "ingest.jsonl", records, _meta(cfg, cfg.get("seed", 0)))
    click.echo(f"ingested objects for {len(records)} images")


@main.command("filter")
@common_options
@click.option("--images-manifest", default=None)
def filter_cmd(config_path, out_dir, seed, jobs, images_manifest):
    """Apply visibility heuristics and anonymization."""
    cfg = Config(config_path, {
        "out_dir": out_dir, "seed": seed, "images_manifest": images_manifest,
    })
    out = _resolve(cfg)
    manifest = cfg.get("images_manifest")
    if not manifest:
        _fail(EXIT_VALIDATION, "images_manifest is required")
    images = {r.id: r for r in load_images_manifest(manifest)}
    _, records = read_artifact(out / "ingest.jsonl", "ingest")

    total = FilterReport()
    out_records = []
    for rec in records:
        image_id = rec["image_id"]
        if image_id not in images:
            _fail(EXIT_VALIDATION, f"image {image_id} not in manifest")
        objs = [OsmObject.from_json(o) for o in rec["objects"]]
        kept, report = filter_for_image(objs, images[image_id])
        total = total.merge(report)
        out_records.append(
            {"image_id": image_id, "objects": [o.to_json() for o in kept]}
        )
    write_artifact(out / "filtered.jsonl", out_records,
                   _meta(cfg, cfg.get("seed", 0)))
    (out / "filter_report.json").write_text(
        json.dumps(total.to_json(), indent=2, sort_keys=True)
    )
    click.echo(f"kept {total.kept} of {total.total} objects")


@main.command()
@common_options
@click.option("--llm-endpoint", "llm_endpoint", default=None)
@click.option("--llm-model", "llm_model", default=None)
@click.option("--cache", "cache_path", default=None, help="label cache JSONL")
def relabel(config_path, out_dir, seed, jobs, llm_endpoint, llm_model, cache_path):
    """Produce 2-3 word semantic labels for unique tag sets."""
    cfg = Config(config_path, {
        "out_dir": out_dir, "seed": seed, "llm_endpoint": llm_endpoint,
        "llm_model": llm_model, "cache": cache_path, "jobs": jobs,
    })
    out = _resolve(cfg)
    endpoint = cfg.get("llm_endpoint")
    if not endpoint:
        _fail(EXIT_VALIDATION, "llm_endpoint is required")
    _, records = read_artifact(out / "filtered.jsonl", "filter")

    client = ChatClient(endpoint, model=cfg.get("llm_model") or "default")
    cache = LabelCache(cfg.get("cache") or out / "label_cache.jsonl")
    grouped = [(r["image_id"], [OsmObject.from_json(o) for o in r["objects"]])
               for r in records]
    all_objects = [o for _, objs in grouped for o in objs]
    try:
        stats = relabel_corpus(all_objects, client, cache=cache,
                               jobs=int(cfg.get("jobs") or 16))
    except EndpointError as e:
        _fail(EXIT_ENDPOINT, f"labeling endpoint failed: {e}")
    out_records = [
        {"image_id": image_id, "objects": [o.to_json() for o in objs]}
        for image_id, objs in grouped
    ]
    write_artifact(out / "labeled.jsonl", out_records, _meta(cfg, cfg.get("seed", 0)))
    (out / "relabel_stats.json").write_text(
        json.dumps(stats.to_json(), indent=2, sort_keys=True)
    )
    click.echo(
        f"labeled {stats.objects} objects ({stats.unique_labels} unique labels, "
        f"{stats.endpoint_calls} endpoint calls)"
    )


@main.command("curate")
@common_options
@click.option("--embeddings", "embeddings_path", default=None)
@click.option("--t1", type=int, default=None)
@click.option("--t2", type=int, default=None)
@click.option("--t3", type=int, default=None)
@click.option("--pca-dim", type=int, default=None)
@click.option("--n-clusters", type=int, default=None)
def curate_cmd(config_path, out_dir, seed, jobs, embeddings_path, t1, t2, t3,
               pca_dim, n_clusters):
    """Three-stage balancing over labels, count bins, and clusters."""
    cfg = Config(config_path, {
        "out_dir": out_dir, "seed": seed, "embeddings": embeddings_path,
        "t1": t1, "t2": t2, "t3": t3, "pca_dim": pca_dim,
        "n_clusters": n_clusters,
    })
    out = _resolve(cfg)
    emb_path = cfg.get("embeddings")
    if not emb_path or not Path(emb_path).exists():
        _fail(EXIT_VALIDATION, f"embeddings file {emb_path} not found")
    _, records = read_artifact(out / "labeled.jsonl", "relabel")

    images = [r["image_id"] for r in records]
    labels = {
        r["image_id"]: [o["label"] for o in r["objects"] if o.get("label")]
        for r in records
    }
    counts = {r["image_id"]: len(r["objects"]) for r in records}
    empty = [i for i in images if not labels[i]]
    if empty:
        # stage 1 needs at least one query per image
        labels.update({i: ["unlabeled area"] for i in empty})
    matrix, ids = read_embeddings(emb_path)
    missing = set(images) - set(ids)
    if missing:
        _fail(EXIT_VALIDATION, f"embeddings missing for images {sorted(missing)[:5]}")

    seed_val = int(cfg.get("seed") or 0)
    params = CurationParams(
        t1=int(cfg.get("t1") or 700),
        t2=int(cfg.get("t2") or 4000),
        t3=int(cfg.get("t3") or 15),
        pca_dim=int(cfg.get("pca_dim") or 256),
        n_clusters=int(cfg.get("n_clusters") or 25000),
        seed=seed_val,
    )
    try:
        curated, trace = curate(images, labels, counts, (matrix, ids), params)
    except CurationCollapseError as e:
        (out / "curation_trace.json").write_text(
            json.dumps(e.trace.to_json(), indent=2, sort_keys=True)
        )
        _fail(EXIT_VALIDATION, str(e))
    write_artifact(
        out / "curated.jsonl",
        [{"image_id": i} for i in curated],
        _meta(cfg, seed_val),
    )
    (out / "curation_trace.json").write_text(
        json.dumps(trace.to_json(), indent=2, sort_keys=True)
    )
    click.echo(f"curated {len(curated)} of {len(images)} images")


@main.command("render")
@common_options
@click.option("--images-manifest", default=None)
@click.option("--style-table", "style_table_path", default=None)
def render_cmd(config_path, out_dir, seed, jobs, images_manifest,
               style_table_path):
    """Render a labeled map tile per curated image."""
    cfg = Config(config_path, {
        "out_dir": out_dir, "seed": seed, "images_manifest": images_manifest,
        "style_table": style_table_path, "jobs": jobs,
    })
    out = _resolve(cfg)
    manifest = cfg.get("images_manifest")
    if not manifest:
        _fail(EXIT_VALIDATION, "images_manifest is required")
    images = {r.id: r for r in load_images_manifest(manifest)}
    _, labeled = read_artifact(out / "labeled.jsonl", "relabel")
    _, curated = read_artifact(out / "curated.jsonl", "curate")

    table = StyleTable.load(cfg.get("style_table"))
    curated_ids = [r["image_id"] for r in curated]
    objects_by_image = {
        r["image_id"]: [OsmObject.from_json(o) for o in r["objects"]]
        for r in labeled
    }
    tiles_dir = out / "tiles"
    tiles_dir.mkdir(parents=True, exist_ok=True)

    def render_one(image_id):
        rec = images[image_id]
        tile = render_tile(rec, objects_by_image.get(image_id, []), table)
        tile.save_png(tiles_dir / f"{image_id}.png")
        return {"image_id": image_id, "blank": tile.blank, "labels": tile.manifest}

    workers = int(cfg.get("jobs") or 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(render_one, curated_ids))
    else:
        results = [render_one(i) for i in curated_ids]
    results.sort(key=lambda r: r["image_id"])
    write_artifact(out / "tiles_manifest.jsonl", results,
                   _meta(cfg, cfg.get("seed", 0)))
    click.echo(f"rendered {len(results)} tiles")


@main.command("caption")
@common_options
@click.option("--images-manifest", default=None)
@click.option("--vlm-endpoint", "vlm_endpoint", default=None)
@click.option("--vlm-model", "vlm_model", default=None)
@click.option("--temperature", type=float, default=None)
def caption_cmd(config_path, out_dir, seed, jobs, images_manifest, vlm_endpoint,
                vlm_model, temperature):
    """Generate two-image captions for curated images (resumable)."""
    cfg = Config(config_path, {
        "out_dir": out_dir, "seed": seed, "images_manifest": images_manifest,
        "vlm_endpoint": vlm_endpoint, "vlm_model": vlm_model,
        "temperature": temperature, "jobs": jobs,
    })
    out = _resolve(cfg)
    endpoint = cfg.get("vlm_endpoint")
    if not endpoint:
        _fail(EXIT_VALIDATION, "vlm_endpoint is required")
    manifest = cfg.get("images_manifest")
    if not manifest:
        _fail(EXIT_VALIDATION, "images_manifest is required")
    images = {r.id: r for r in load_images_manifest(manifest)}
    _, curated = read_artifact(out / "curated.jsonl", "curate")
    tiles_dir = out / "tiles"
    if not tiles_dir.exists():
        _fail(EXIT_VALIDATION,
              f"missing tiles directory {tiles_dir}; run the `render` "
              f"subcommand first")

    # per-sample checkpoint: completed ids are skipped on resume
    checkpoint = out / "captions_raw.jsonl"
    done: set[str] = set()
    samples: list[cap.CaptionSample] = []
    if checkpoint.exists():
        for s in cap.load_corpus(checkpoint):
            done.add(s.image_id)
            samples.append(s)

    client = ChatClient(endpoint, model=cfg.get("vlm_model") or "default")
    temp = float(cfg.get("temperature") or cap.CAPTION_TEMPERATURE)
    todo = [r["image_id"] for r in curated if r["image_id"] not in done]
    workers = int(cfg.get("jobs") or 4)

    def caption_one(image_id):
        return cap.generate_caption(
            images[image_id], tiles_dir / f"{image_id}.png", client,
            temperature=temp,
        )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        new = list(pool.map(caption_one, todo))
    with open(checkpoint, "a", encoding="utf-8") as f:
        for s in new:
            if not s.failed:
                f.write(json.dumps(s.to_json()) + "\n")
    samples.extend(new)

    try:
        summary = cap.emit_corpus(samples, out / "captions.jsonl")
    except cap.EmptyCorpusError as e:
        _fail(EXIT_ENDPOINT, str(e))
    summary["config_digest"] = cfg.digest()
    summary["seed"] = cfg.get("seed", 0)
    (out / "captions_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True)
    )
    click.echo(f"captioned {summary['written']} images "
               f"({summary['failed']} failures)")


@main.command("mix")
@common_options
@click.option("--component", "components", multiple=True,
              help="corpus JSONL component (repeatable)")
@click.option("--target", type=int, default=None,
              help="per-component contribution size")
def mix_cmd(config_path, out_dir, seed, jobs, components, target):
    """Mix corpora at equal per-component contribution."""
    cfg = Config(config_path, {
        "out_dir": out_dir, "seed": seed, "target": target,
        "components": ",".join(components) if components else None,
    })
    out = _resolve(cfg)
    comp_value = cfg.get("components")
    comps = [c for c in (comp_value or "").split(",") if c]
    target_val = cfg.get("target")
    if not comps or not target_val:
        _fail(EXIT_VALIDATION, "at least one --component and --target required")
    for c in comps:
        if not Path(c).exists():
            _fail(EXIT_VALIDATION, f"mixture component {c} not found")
    try:
        spec = cap.MixtureSpec(comps, int(target_val), int(cfg.get("seed") or 0))
        manifest = cap.mix_corpora(spec, out / "mixed.jsonl")
    except ValueError as e:
        _fail(EXIT_VALIDATION, str(e))
    manifest["config_digest"] = cfg.digest()
    (out / "mixture_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True)
    )
    click.echo(f"mixed {manifest['total']} lines from {len(comps)} components")


@main.command("evaluate")
@common_options
@click.option("--benchmark", required=True)
@click.option("--dataset", "dataset_path", required=True)
@click.option("--model-endpoint", "model_endpoint", default=None)
@click.option("--judge-endpoint", "judge_endpoint", default=None)
@click.option("--model-name", default="model")
@click.option("--rural-urban-literal", is_flag=True, default=False,
              help="use the literal yes/no rural-urban prompt variant")
@click.option("--out", "out_path", default=None)
def evaluate_cmd(config_path, out_dir, seed, jobs, benchmark, dataset_path,
                 model_endpoint, judge_endpoint, model_name,
                 rural_urban_literal, out_path):
    """Run one benchmark against a model endpoint."""
    cfg = Config(config_path, {
        "out_dir": out_dir, "seed": seed, "model_endpoint": model_endpoint,
        "judge_endpoint": judge_endpoint,
    })
    out = _resolve(cfg)
    endpoint = cfg.get("model_endpoint") or cfg.get("vlm_endpoint")
    if not endpoint:
        _fail(EXIT_VALIDATION, "model_endpoint is required")
    if not Path(dataset_path).exists():
        _fail(EXIT_VALIDATION, f"dataset {dataset_path} not found")
    judge_url = cfg.get("judge_endpoint")
    judge = ChatClient(judge_url) if judge_url else None
    client = ChatClient(endpoint, model=model_name)
    try:
        report = run_benchmark(
            client, benchmark, dataset_path, judge=judge,
            rural_urban_literal=rural_urban_literal,
        )
    except EndpointError as e:
        _fail(EXIT_ENDPOINT, f"evaluation endpoint failed: {e}")
    except ValueError as e:
        _fail(EXIT_VALIDATION, str(e))
    n_failed = report.flags.get("transport-failure", 0)
    if report.predictions and n_failed == len(report.predictions):
        _fail(EXIT_ENDPOINT,
              f"model endpoint failed for all {n_failed} samples")
    payload = report.to_json()
    payload["model"] = model_name
    # the model under test must not perturb the digest or reports from
    # different models could never be aggregated
    payload["config_digest"] = cfg.digest(exclude=("model_endpoint",))
    dest = Path(out_path) if out_path else out / f"report_{benchmark}_{model_name}.json"
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(json.dumps(payload, indent=2, sort_keys=True))
    click.echo(f"wrote {dest}")


@main.command("report")
@common_options
@click.option("--report", "report_paths", multiple=True, required=True,
              help="per-model evaluation report JSON (repeatable)")
@click.option("--out", "out_path", default=None, help="rank table CSV")
def report_cmd(config_path, out_dir, seed, jobs, report_paths, out_path):
    """Aggregate per-model reports into an average-rank table."""
    cfg = Config(config_path, {"out_dir": out_dir, "seed": seed})
    out = _resolve(cfg)
    scores: dict[str, dict[str, float]] = {}
    digests = set()
    for path in report_paths:
        p = Path(path)
        if not p.exists():
            _fail(EXIT_VALIDATION,
                  f"missing report {path}; run the `evaluate` subcommand first")
        payload = json.loads(p.read_text())
        digests.add(payload.get("config_digest"))
        model = payload.get("model", p.stem)
        cells = MetricReport.from_json(payload).cells()
        scores.setdefault(model, {}).update(cells)
    if len(digests) > 1:
        _fail(EXIT_VALIDATION,
              f"refusing to mix reports with conflicting config digests: "
              f"{sorted(str(d) for d in digests)}")
    try:
        ranks = average_rank(scores)
    except ValueError as e:
        _fail(EXIT_VALIDATION, str(e))
    dest = Path(out_path) if out_path else out / "ranks.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "fine_tuning", "generalization", "overall"])
        for model in sorted(ranks, key=lambda m: ranks[m]["overall"]):
            r = ranks[model]
            writer.writerow([
                model, f"{r['fine_tuning']:.3f}", f"{r['generalization']:.3f}",
                f"{r['overall']:.3f}",
            ])
    click.echo(f"wrote {dest}")


if __name__ == "__main__":
    main()
