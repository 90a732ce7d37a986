"""``simukit`` command-line entry point.

Exit status: 0 success, 1 domain failure (failed validation, failed run,
unknown block, ...), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .codegen import (
    BuildScript,
    lower,
    parse_engine_script,
    render_engine_script,
    render_matlab,
    sanitize_model_name,
)
from .config import Config, load_config
from .conformance import render_review, validate
from .diff import accuracy
from .errors import ConfigError, SimukitError, UnknownBlockType, UnvalidatedNetlist
from .executor import ExternalConfig, dry_run, run_external
from .kb import describe_ports, load_kb, lookup, render_descriptor, render_kb
from .netlist import Netlist, load_netlist, parse_netlist, render
from .orchestrator import (
    HTTPTransport,
    Limits,
    PipelineOptions,
    ReplayTransport,
    Transcript,
    load_task,
    run_pipeline,
    write_report,
)

OK, FAIL, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "json":
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") or not text else text + "\n")


def _config(args) -> Config:
    overrides = {
        "kb": getattr(args, "kb", None),
        "matlab": getattr(args, "matlab", None),
        "endpoint": getattr(args, "endpoint", None),
        "model": getattr(args, "model_id", None),
        "timeout": getattr(args, "timeout", None),
    }
    return load_config(getattr(args, "config", None), overrides=overrides)


def _kb(args, cfg: Config | None = None):
    cfg = cfg or _config(args)
    if cfg.kb is None:
        raise UsageError("no knowledge base given (use --kb, SIMUKIT_KB or a config file)")
    return load_kb(cfg.kb)


def _out_path(args, name: str) -> str:
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


# -- subcommands ----------------------------------------------------------------


def cmd_kb(args) -> int:
    if args.kb_command == "ingest":
        kb = load_kb(args.file)
        types = kb.block_types
        written = None
        if args.out_dir:
            written = _out_path(args, "kb.md")
            with open(written, "w", encoding="utf-8") as fh:
                fh.write(render_kb(kb))
        text = f"{len(types)} block descriptions\n" + "".join(f"  {t}\n" for t in types)
        if written:
            text += f"canonical form written to {written}\n"
        _emit(args, {"count": len(types), "block_types": types, "written": written}, text)
        return OK
    kb = _kb(args)
    try:
        desc = lookup(kb, args.block_type)
    except UnknownBlockType as exc:
        print(str(exc), file=sys.stderr)
        return FAIL
    payload = {
        "block_type": desc.block_type,
        "library_path": desc.library_path,
        "parameters": list(desc.parameters),
        "ports": describe_ports(desc),
    }
    _emit(args, payload, render_descriptor(desc))
    return OK


def _netlist_dict(net: Netlist) -> dict:
    def ep(e):
        return {
            "block": e.block_name,
            "type": e.block_type,
            "port": e.port,
            "params": {p.key: p.value for p in e.params},
        }

    return {
        "blocks": [{"name": b.name, "type": b.block_type} for b in net.blocks],
        "connections": [{"src": ep(c.src), "dst": ep(c.dst)} for c in net.connections],
        "errors": [str(e) for e in net.errors],
    }


def cmd_parse(args) -> int:
    net = parse_netlist(_read(args.file), strict=not args.lenient)
    _emit(args, _netlist_dict(net), render(net))
    return FAIL if net.errors else OK


def cmd_validate(args) -> int:
    kb = _kb(args)
    report = validate(load_netlist(args.netlist, strict=False), kb)
    _emit(args, report.to_dict(), render_review(report))
    return OK if report.passed else FAIL


def _model_name(args, path: str) -> str:
    return args.model or sanitize_model_name(os.path.splitext(os.path.basename(path))[0])


def cmd_gen(args) -> int:
    kb = _kb(args)
    net = load_netlist(args.netlist, strict=False)
    model = _model_name(args, args.netlist)
    try:
        script = lower(net, kb, model, check=not args.no_check)
    except UnvalidatedNetlist as exc:
        print(str(exc), file=sys.stderr)
        if exc.report is not None:
            sys.stderr.write(render_review(exc.report))
        return FAIL
    if args.emit == "matlab":
        text, name = render_matlab(script, args.autorouting), f"{model}.m"
    else:
        text, name = render_engine_script(script, args.autorouting), f"{model}_build.txt"
    path = _out_path(args, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    payload = {"model": model, "emit": args.emit, "path": path, "commands": len(script.commands)}
    _emit(args, payload, f"wrote {path} ({len(script.commands)} commands)")
    return OK


def _load_script(path: str, kb, model: str | None) -> BuildScript:
    text = _read(path)
    if path.endswith(".net") or "<->" in text:
        net = parse_netlist(text, strict=False)
        name = model or sanitize_model_name(os.path.splitext(os.path.basename(path))[0])
        return lower(net, kb, name, check=False)
    return parse_engine_script(text)


def _result_text(result, script: BuildScript) -> str:
    if result.ok:
        return f"ok ({len(script.commands)} commands)"
    cmd = script.commands[result.failed_command_index]
    return f"failed at command {result.failed_command_index}: {cmd}\n{result.error_message}"


def cmd_dryrun(args) -> int:
    kb = _kb(args)
    script = _load_script(args.file, kb, args.model)
    result = dry_run(script, kb)
    _emit(args, result.to_dict(timing=False), _result_text(result, script))
    return OK if result.ok else FAIL


def cmd_exec(args) -> int:
    cfg = _config(args)
    kb = load_kb(cfg.kb) if cfg.kb else None
    text = _read(args.file)
    if kb is None and (args.file.endswith(".net") or "<->" in text):
        raise UsageError("a netlist needs --kb to be lowered")
    script = _load_script(args.file, kb, args.model)
    external = ExternalConfig(cfg.matlab, cfg.timeout, cfg.temp_dir, args.autorouting)
    result = run_external(script, external)
    payload = result.to_dict(timing=False)
    payload["raw_output"] = result.raw_output
    _emit(args, payload, _result_text(result, script))
    return OK if result.ok else FAIL


def cmd_diff(args) -> int:
    kb = _kb(args)
    res = accuracy(load_netlist(args.gt, strict=False), load_netlist(args.gen, strict=False), kb)
    text = (
        f"blocks      {res.b_match}/{res.b_gt}\n"
        f"connections {res.c_match}/{res.c_gt}\n"
        f"accuracy    {res.accuracy_percent:.2f}"
    )
    _emit(args, res.to_dict(), text)
    return OK


def _parse_limits(text: str | None, base: Limits) -> Limits:
    if not text:
        return base
    values = {"max_review": base.max_review, "max_build": base.max_build}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in values:
            raise UsageError(f"bad --limits entry {part!r}; expected max-review=N,max-build=N")
        try:
            values[key] = int(value)
        except ValueError:
            raise UsageError(f"bad --limits value {value!r}") from None
    try:
        return Limits(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_run(args) -> int:
    if bool(args.replay) == bool(args.endpoint):
        raise UsageError("give exactly one of --replay or --endpoint")
    cfg = _config(args)
    meta: dict = {}
    if args.replay:
        transcript = Transcript.read(args.replay)
        meta = transcript.metadata
        base = os.path.dirname(os.path.abspath(args.replay))
        task_dir = args.task or (os.path.join(base, meta["task_dir"]) if "task_dir" in meta else None)
        kb_path = cfg.kb or (os.path.join(base, meta["kb"]) if "kb" in meta else None)
        transport = ReplayTransport(transcript)
        opts = dict(meta.get("options", {}))
        limits_base = Limits(**meta["limits"]) if "limits" in meta else cfg.limits
    else:
        task_dir, kb_path = args.task, cfg.kb
        if not cfg.model and not cfg.role_models:
            raise UsageError("--endpoint needs --model")
        transport = None
        opts = {}
        limits_base = cfg.limits
    if task_dir is None:
        raise UsageError("no task directory (use --task)")
    if kb_path is None:
        raise UsageError("no knowledge base given (use --kb, SIMUKIT_KB or a config file)")
    for key in ("reviewer", "builder", "locator", "report"):
        if getattr(args, key):
            opts[key] = getattr(args, key)
    if args.autorouting:
        opts["autorouting"] = True
    options = PipelineOptions(**opts)
    task = load_task(task_dir)
    if transport is None:
        transport = HTTPTransport(
            cfg.endpoint,
            cfg.model or "",
            api_key=cfg.api_key,
            role_models=cfg.role_models,
            image_root=task_dir,
        )
    kb = load_kb(kb_path)
    external = ExternalConfig(cfg.matlab, cfg.timeout, cfg.temp_dir, options.autorouting)
    record, transcript_out = run_pipeline(
        task,
        transport,
        kb,
        _parse_limits(args.limits, limits_base),
        "matlab" if args.executor == "matlab" else "dryrun",
        options,
        external=external,
        model_ids=cfg.role_models or ({} if not cfg.model else None),
    )
    if args.out_dir:
        with open(_out_path(args, "run_record.json"), "w", encoding="utf-8") as fh:
            fh.write(record.to_json())
        transcript_out.metadata.update({k: v for k, v in meta.items() if k not in transcript_out.metadata})
        transcript_out.write(_out_path(args, "transcript.jsonl"))
        if record.report:
            with open(_out_path(args, "report.md"), "w", encoding="utf-8") as fh:
                fh.write(record.report)
    text = [
        f"task          {record.task}",
        f"final state   {record.final_state}" + (f" ({record.failure})" if record.failure else ""),
        f"review rounds {record.review_rounds}",
        f"build cycles  {record.build_cycles}",
        f"cost usd      {record.cost_usd:.4f}",
    ]
    if record.accuracy:
        text.append(f"accuracy      {record.accuracy['accuracy_percent']:.2f}")
    _emit(args, record.to_dict(timing=args.timing), "\n".join(text))
    return OK if record.done else FAIL


def cmd_report(args) -> int:
    kb = _kb(args)
    net = load_netlist(args.netlist, strict=False)
    if args.script:
        script = parse_engine_script(_read(args.script))
    else:
        script = lower(net, kb, _model_name(args, args.netlist), check=False)
    explanation = _read(args.explanation) if args.explanation else ""
    doc = write_report(net, kb, script, None, explanation)
    written = None
    if args.out_dir:
        written = _out_path(args, "report.md")
        with open(written, "w", encoding="utf-8") as fh:
            fh.write(doc)
    _emit(args, {"report": doc, "path": written}, doc)
    return OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--config", help="key=value settings file")
    common.add_argument("--out-dir", help="directory for any files written")
    kb_opt = argparse.ArgumentParser(add_help=False)
    kb_opt.add_argument("--kb", help="knowledge base markdown file")

    p = _Parser(prog="simukit", description="Simulink connection-description toolchain.")
    p.add_argument("--version", action="version", version=f"simukit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    kb = sub.add_parser("kb", help="knowledge base tools")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True, parser_class=_Parser)
    ing = kb_sub.add_parser("ingest", parents=[common], help="check a KB file")
    ing.add_argument("file")
    show = kb_sub.add_parser("show", parents=[common, kb_opt], help="print one block description")
    show.add_argument("block_type")
    kb.set_defaults(func=cmd_kb)

    sp = sub.add_parser("parse", parents=[common], help="parse a netlist")
    sp.add_argument("file")
    sp.add_argument("--lenient", action="store_true", help="collect errors instead of stopping")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("validate", parents=[common, kb_opt], help="run the eight checks")
    sp.add_argument("netlist")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("gen", parents=[common, kb_opt], help="generate a build script")
    sp.add_argument("netlist")
    sp.add_argument("--emit", choices=("matlab", "engine"), default="matlab")
    sp.add_argument("--model")
    sp.add_argument("--autorouting", action="store_true")
    sp.add_argument("--no-check", action="store_true", help="skip validation")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("dryrun", parents=[common, kb_opt], help="dry-run a netlist or engine script")
    sp.add_argument("file")
    sp.add_argument("--model")
    sp.set_defaults(func=cmd_dryrun)

    sp = sub.add_parser("exec", parents=[common, kb_opt], help="run a script in external MATLAB")
    sp.add_argument("file")
    sp.add_argument("--matlab", help="MATLAB launcher")
    sp.add_argument("--timeout", type=float)
    sp.add_argument("--model")
    sp.add_argument("--autorouting", action="store_true")
    sp.set_defaults(func=cmd_exec)

    sp = sub.add_parser("diff", parents=[common, kb_opt], help="score a netlist against ground truth")
    sp.add_argument("gt")
    sp.add_argument("gen")
    sp.set_defaults(func=cmd_diff)

    sp = sub.add_parser("run", parents=[common, kb_opt], help="run the agent workflow")
    sp.add_argument("--task", help="task directory")
    sp.add_argument("--replay", help="recorded transcript")
    sp.add_argument("--endpoint", help="chat-completions URL")
    sp.add_argument("--model", dest="model_id", help="model id for the endpoint")
    sp.add_argument("--executor", choices=("dryrun", "matlab"), default="dryrun")
    sp.add_argument("--matlab", help="MATLAB launcher")
    sp.add_argument("--timeout", type=float)
    sp.add_argument("--limits", help="e.g. max-review=3,max-build=5")
    sp.add_argument("--reviewer", choices=("agent", "deterministic", "both"))
    sp.add_argument("--builder", choices=("agent", "lower"))
    sp.add_argument("--locator", choices=("agent", "builtin"))
    sp.add_argument("--report", choices=("template", "agent"))
    sp.add_argument("--autorouting", action="store_true")
    sp.add_argument("--timing", action="store_true", help="include wall-clock fields in JSON")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", parents=[common, kb_opt], help="write the four-section report")
    sp.add_argument("netlist")
    sp.add_argument("--script", help="engine script; lowered from the netlist when absent")
    sp.add_argument("--explanation", help="text file describing the simulation")
    sp.add_argument("--model")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return USAGE
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE
    except ConfigError as exc:
        print(f"simukit: {exc}", file=sys.stderr)
        return USAGE
    except (SimukitError, OSError) as exc:
        print(f"simukit: {exc}", file=sys.stderr)
        return FAIL
