"""Command-line entry point.

Every subcommand is a thin wrapper over one library call; outputs are
the core file formats.  Endpoint settings merge three layers, flags
over environment (BASE_URL, API_KEY, MODEL) over the JSON config file.
Failures print a one-line structured error to stderr and exit nonzero
without leaving partial output files behind.
"""

from __future__ import annotations

import json
import os
import random as _random
import sys
from pathlib import Path
from typing import NoReturn, Optional

import click

from .client import load_endpoint_config
from .core import read_records, write_records, EvaluationRecord
from .dataset import (
    dataset_stats,
    expand_records,
    export_conversations,
    read_samples,
    rebalance_dataset,
    write_samples,
)
from .metaeval import (
    AnnotatorScores,
    SubjectiveItem,
    correlation_report,
    overall_scores,
    subjective_eval,
)
from .pipeline import FailurePolicy, PipelineConfig, Variant, evaluate_batch


def _die(exc: BaseException, code: int = 2) -> NoReturn:
    click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
    sys.exit(code)


def _endpoint(config_path, base_url, api_key, model, max_concurrency, timeout, max_retries):
    overrides = {
        "base_url": base_url,
        "api_key": api_key,
        "model_name": model,
        "max_concurrency": max_concurrency,
        "request_timeout": timeout,
        "max_retries": max_retries,
    }
    return load_endpoint_config(
        Path(config_path) if config_path else None,
        env=os.environ,
        overrides={k: v for k, v in overrides.items() if v is not None},
    )


def _endpoint_options(fn):
    decorators = [
        click.option(
            "--config",
            "config_path",
            envvar="CONFIG_FILE",
            type=click.Path(exists=True, dir_okay=False),
            help="JSON endpoint config file (or CONFIG_FILE env var).",
        ),
        click.option("--base-url", help="Chat endpoint base URL (or BASE_URL)."),
        click.option("--api-key", help="Bearer token (or API_KEY)."),
        click.option("--model", help="Model name (or MODEL)."),
        click.option("--max-concurrency", type=int, help="Concurrent requests cap."),
        click.option("--timeout", type=float, help="Per-request timeout in seconds."),
        click.option("--max-retries", type=int, help="Retry budget per request."),
    ]
    for deco in reversed(decorators):
        fn = deco(fn)
    return fn


def _print_seed(seed: Optional[int]) -> int:
    if seed is None:
        seed = _random.SystemRandom().randrange(2**32)
        click.echo(f"seed: {seed}")
    return seed


@click.group()
@click.version_option(package_name="t2ijudge")
def main() -> None:
    """Staged text-to-image evaluation toolkit."""


@main.command()
@click.argument("pairs_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output dataset file.")
@click.option(
    "--variant",
    type=click.Choice([v.value for v in Variant]),
    default=Variant.FULL.value,
    show_default=True,
)
@click.option(
    "--failure-policy",
    type=click.Choice([p.value for p in FailurePolicy]),
    default=FailurePolicy.SKIP_RECORD.value,
    show_default=True,
)
@click.option("--parallelism", type=int, default=None, help="Worker count (default: CPUs capped at max_concurrency).")
@click.option("--retry-parse", type=int, default=2, show_default=True, help="Extra attempts on unparseable replies.")
@click.option("--prompt-dir", type=click.Path(exists=True, file_okay=False), help="Directory of template overrides.")
@click.option("--evaluator", default="", help="Provenance evaluator label (default: model name).")
@click.option("--timestamps", is_flag=True, help="Record wall-clock provenance (breaks byte determinism).")
@click.option("--checkpoint", type=click.Path(dir_okay=False), help="Checkpoint file (default: alongside --out).")
@_endpoint_options
def evaluate(
    pairs_file,
    out,
    variant,
    failure_policy,
    parallelism,
    retry_parse,
    prompt_dir,
    evaluator,
    timestamps,
    checkpoint,
    config_path,
    base_url,
    api_key,
    model,
    max_concurrency,
    timeout,
    max_retries,
):
    """Run the evaluation pipeline over a dataset file of pairs."""
    try:
        endpoint = _endpoint(config_path, base_url, api_key, model, max_concurrency, timeout, max_retries)
        records = read_records(pairs_file)
        pairs = [(r.prompt, r.image) for r in records]
        config = PipelineConfig(
            endpoint=endpoint,
            variant=Variant(variant),
            retry_on_parse_failure=retry_parse,
            failure_policy=FailurePolicy(failure_policy),
            prompt_dir=Path(prompt_dir) if prompt_dir else None,
            evaluator=evaluator,
            record_timestamps=timestamps,
        )
        _, report = evaluate_batch(
            config,
            pairs,
            Path(out),
            parallelism=parallelism,
            checkpoint_path=Path(checkpoint) if checkpoint else None,
        )
    except Exception as exc:
        _die(exc)
    for line in report.format_lines():
        click.echo(line)


@main.command()
@click.argument("records_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output samples file.")
@click.option("--prompt-dir", type=click.Path(exists=True, file_okay=False), help="Directory of template overrides.")
def expand(records_file, out, prompt_dir):
    """Expand complete records into per-sub-task training samples."""
    try:
        records = read_records(records_file)
        samples = expand_records(records, Path(prompt_dir) if prompt_dir else None)
        count = write_samples(Path(out), samples)
    except Exception as exc:
        _die(exc)
    click.echo(f"records: {len(records)}")
    click.echo(f"samples: {count}")


@main.command()
@click.argument("samples_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output samples file.")
@click.option("--seed", type=int, default=None, help="Sampling seed (generated and printed if absent).")
def rebalance(samples_file, out, seed):
    """Score-rebalance scored sub-tasks, then replicate coarse kinds."""
    seed = _print_seed(seed)
    try:
        samples = read_samples(Path(samples_file))
        balanced, plans = rebalance_dataset(samples, seed)
        count = write_samples(Path(out), balanced)
    except Exception as exc:
        _die(exc)
    for name, plan in plans.items():
        click.echo(f"[{name}]")
        for line in plan.format_lines():
            click.echo(f"  {line}")
    click.echo(f"samples in: {len(samples)}")
    click.echo(f"samples out: {count}")


@main.command()
@click.argument("samples_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Conversation JSONL file.")
@click.option("--shuffle-seed", type=int, default=None, help="Shuffle output with this seed (default: keep order).")
def export(samples_file, out, shuffle_seed):
    """Export samples as chat-format training conversations."""
    try:
        samples = read_samples(Path(samples_file))
        count = export_conversations(samples, Path(out), shuffle_seed=shuffle_seed)
    except Exception as exc:
        _die(exc)
    click.echo(f"conversations: {count}")


def _sniff_samples(path: Path) -> bool:
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                doc = json.loads(line)
                return "turns" in doc
    return False


@main.command()
@click.argument("data_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "json_out", type=click.Path(dir_okay=False), help="Also write the report as JSON.")
@click.option("--plot-dir", type=click.Path(file_okay=False), help="Emit histogram figures into this directory.")
def stats(data_file, json_out, plot_dir):
    """Counts and score histograms for a records or samples file."""
    try:
        path = Path(data_file)
        if _sniff_samples(path):
            result = dataset_stats(samples=read_samples(path))
        else:
            result = dataset_stats(records=read_records(path))
        from .reporting import write_stats_outputs

        written = write_stats_outputs(
            result,
            Path(json_out) if json_out else None,
            Path(plot_dir) if plot_dir else None,
        )
    except Exception as exc:
        _die(exc)
    for line in result.format_lines():
        click.echo(line)
    for figure in written.get("figures", []):
        click.echo(f"figure: {figure}")
    if "json" in written:
        click.echo(f"json: {written['json']}")


@main.command()
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("annotator_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--mode",
    type=click.Choice(["mean_scores", "mean_correlations"]),
    default="mean_scores",
    show_default=True,
)
@click.option("--upper-bound", is_flag=True, help="Also report inter-annotator agreement.")
@click.option("--out-dir", type=click.Path(file_okay=False), help="Write delimited, JSON, and figure outputs here.")
def metaeval(model_file, annotator_files, mode, upper_bound, out_dir):
    """Correlate model overall scores against human annotator records."""
    try:
        model = overall_scores(read_records(model_file))
        annotators = []
        for annotator_file in annotator_files:
            records = read_records(annotator_file)
            names = {r.provenance.evaluator for r in records if r.provenance.evaluator}
            name = names.pop() if len(names) == 1 else Path(annotator_file).stem
            annotators.append(AnnotatorScores(name, overall_scores(records)))
        report = correlation_report(
            model, annotators, average_mode=mode, upper_bound=upper_bound
        )
        from .reporting import format_correlation_table, write_correlation_outputs

        written = {}
        if out_dir:
            written = write_correlation_outputs(report, Path(out_dir))
    except Exception as exc:
        _die(exc)
    for line in format_correlation_table(report):
        click.echo(line)
    for kind, path in written.items():
        click.echo(f"{kind}: {path}")


@main.command()
@click.argument("items_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", type=click.Choice(["fine", "coarse"]), default="fine", show_default=True)
@click.option("--retries", type=int, default=2, show_default=True)
@_endpoint_options
def subjective(items_file, kind, retries, config_path, base_url, api_key, model, max_concurrency, timeout, max_retries):
    """Score explanation quality with a judge endpoint (0-5 each)."""
    try:
        endpoint = _endpoint(config_path, base_url, api_key, model, max_concurrency, timeout, max_retries)
        raw = json.loads(Path(items_file).read_text(encoding="utf-8"))
        if not isinstance(raw, list):
            raise ValueError("items file must hold a JSON array")
        items = [
            SubjectiveItem(
                generated_explanation=doc["generated_explanation"],
                reference_explanation=doc["reference_explanation"],
                question=doc.get("question"),
            )
            for doc in raw
        ]
        from .client import ChatClient, ChatMessage

        class _PlainChat:
            # subjective_eval speaks role/content dicts; ChatClient wants ChatMessage.
            def __init__(self, client):
                self._client = client

            def chat(self, messages):
                return self._client.chat(
                    [ChatMessage(role=m["role"], text=m["content"]) for m in messages]
                )

        with ChatClient(endpoint) as chat:
            result = subjective_eval(_PlainChat(chat), items, kind=kind, retries=retries)
    except Exception as exc:
        _die(exc)
    for index, score in enumerate(result.scores):
        click.echo(f"item {index}: {score if score is not None else 'unscored'}")
    click.echo(f"mean: {result.mean}")
    if result.failures:
        click.echo(f"unscored items: {result.failures}")


@main.command("serve-annotator")
@click.argument("benchmark_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--root", required=True, type=click.Path(file_okay=False), help="State directory for the event log.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8800, show_default=True)
@click.option("--token", default=None, help="Shared access token (open when unset).")
@click.option("--ui-origin", default="*", show_default=True, help="CORS origin of the annotation UI.")
@click.option("--no-prefill", is_flag=True, help="Hide machine extractions from annotators.")
def serve_annotator(benchmark_file, root, host, port, token, ui_origin, no_prefill):
    """Serve the annotation API over a benchmark dataset file."""
    try:
        from .annotator import AnnotationStore, load_benchmark
        from .annotator.api import run_server

        benchmark = load_benchmark(Path(benchmark_file))
        store = AnnotationStore(benchmark, Path(root), prefill=not no_prefill)
    except Exception as exc:
        _die(exc)
    click.echo(f"serving {len(benchmark)} items on http://{host}:{port}")
    with store:
        run_server(store, host=host, port=port, token=token, ui_origin=ui_origin)


@main.command("oracle-serve")
@click.option("--port", type=int, default=8750, show_default=True)
def oracle_serve(port):
    """Serve the deterministic scene oracle as a local chat endpoint."""
    from .oracle import serve_oracle

    click.echo(f"oracle listening on http://127.0.0.1:{port}")
    try:
        serve_oracle(port)
    except KeyboardInterrupt:
        pass


@main.command("oracle-pairs")
@click.option("--count", type=int, default=100, show_default=True)
@click.option("--base-seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output dataset file of bare pairs.")
def oracle_pairs(count, base_seed, out):
    """Write synthetic prompt-image pairs for oracle runs."""
    try:
        from .oracle import make_pairs

        records = [
            EvaluationRecord(prompt=prompt, image=image)
            for prompt, image in make_pairs(count, base_seed)
        ]
        written = write_records(Path(out), records)
    except Exception as exc:
        _die(exc)
    click.echo(f"pairs: {written}")


if __name__ == "__main__":
    main()
