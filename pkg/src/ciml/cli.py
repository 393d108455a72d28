"""Command line tool: reproducible runs driven by one INI file."""
import argparse
import configparser
import os
import textwrap
import torch
import ciml
from ciml import output
from ciml.common import CimlError, ConfigError, DataError
from ciml.config import (parse_arguments, format_arguments, read_config,
                         apply_overrides)
from ciml.dataset import load_dataset, save_dataset
from ciml.synthetic import SyntheticSpec, generate_synthetic
from ciml.trainer import TrainConfig, save_checkpoint, load_checkpoint
from ciml.evaluation import (EvalSettings, SweepSettings, MetricsReport,
                             trial_seeds, run_trial, evaluate_state,
                             test_indices, run_ablation, sweep,
                             sufficiency_check, independence_audit,
                             export_embeddings, complexity_estimate,
                             convergence_summary, METRIC_NAMES)

__all__ = [ "RunConfig", "main", "cmd_synth", "cmd_train", "cmd_eval",
            "cmd_ablate", "cmd_sweep", "cmd_audit", "cmd_export", ]

# Environment variable with the output root
OUTPUT_ENV = "CIML_OUTPUT"

SECTIONS = ("data", "synthetic", "model", "train", "evaluation", "sweep",
            "output")

CHECKPOINT_FILE = "checkpoint.pt"


class RunConfig:
    """Resolved content of a run configuration.

    Attributes:
        manifest: Data set manifest (absolute path) or None.
        synthetic: SyntheticSpec or None.
        train: TrainConfig.
        evaluation: EvalSettings.
        sweep: SweepSettings.
        directory: Output directory.
        binary: Whether matrices are written in the binary container.
    """

    data_arguments = {
        "manifest": ( "string", None, True, None ),
    }

    output_arguments = {
        "directory": ( "string", None, True, None ),
        "binary": ( "logical", None, True, False ),
    }

    def __init__(self, parser, basedir=".", environ=None, need_data=True):
        """Initializes the run configuration from a parsed INI file.

        Args:
            parser: configparser.ConfigParser instance.
            basedir: Directory relative paths in the file refer to.
            environ: Environment (default: os.environ).
            need_data: Whether exactly one data source must be present.
        """
        environ = os.environ if environ is None else environ
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError("Unknown section [{}]".format(section))
        sect = lambda name: (dict(parser[name]) if parser.has_section(name)
                             else None)
        data = parse_arguments(self.data_arguments, sect("data"), "data")
        self.manifest = data["manifest"]
        if self.manifest is not None:
            self.manifest = os.path.join(basedir, self.manifest)
        self.synthetic = None
        if parser.has_section("synthetic"):
            self.synthetic = SyntheticSpec.fromdict(sect("synthetic"))
        if need_data and (self.manifest is None) == (self.synthetic is None):
            raise ConfigError("Specify exactly one data source: [data] "
                              "manifest or a [synthetic] section")
        self.train = TrainConfig.fromdict(sect("model"), sect("train"))
        self.evaluation = EvalSettings.fromdict(sect("evaluation"))
        self.sweep = SweepSettings.fromdict(sect("sweep"))
        out = parse_arguments(self.output_arguments, sect("output"), "output")
        self.binary = out["binary"]
        self.directory = out["directory"]
        if self.directory is None:
            self.directory = environ.get(OUTPUT_ENV)
        if self.directory is None:
            raise ConfigError("No output directory: set [output] directory, "
                              "--output or ${}".format(OUTPUT_ENV))
        self.directory = os.path.join(basedir, self.directory)


    def prepare_output(self):
        """Creates the output directory and checks that it is writable."""
        try:
            os.makedirs(self.directory, exist_ok=True)
        except OSError as exc:
            raise ConfigError("Can't create output directory '{}': {}".format(
                self.directory, exc))
        if not os.access(self.directory, os.W_OK):
            raise ConfigError("Output directory '{}' is not writable".format(
                self.directory))


    def path(self, filename):
        return os.path.join(self.directory, filename)


    def resolved(self):
        """Returns the configuration with all defaults filled in."""
        parser = configparser.ConfigParser()
        if self.manifest is not None:
            parser["data"] = { "manifest": self.manifest }
        if self.synthetic is not None:
            parser["synthetic"] = self.synthetic.todict()
        parser["model"], parser["train"] = self.train.todict()
        parser["evaluation"] = self.evaluation.todict()
        parser["sweep"] = self.sweep.todict()
        parser["output"] = { "directory": self.directory,
                             "binary": "yes" if self.binary else "no" }
        return parser


    def load_data(self):
        if self.manifest is not None:
            return load_dataset(self.manifest)
        dataset, _ = generate_synthetic(self.synthetic)
        return dataset


def _echo(runconfig, seeds):
    runconfig.prepare_output()
    output.write_config(runconfig.resolved(), runconfig.path("config.ini"))
    output.write_report(seeds, runconfig.path("seeds.json"))


def cmd_synth(runconfig):
    """Generates the synthetic data set and its oracle report."""
    if runconfig.synthetic is None:
        raise ConfigError("Command 'synth' needs a [synthetic] section")
    spec = runconfig.synthetic
    _echo(runconfig, { "root_seed": spec.seed })
    dataset, oracle = generate_synthetic(spec)
    manifest = save_dataset(dataset, runconfig.path("dataset"),
                            runconfig.binary)
    report = oracle.report()
    report["manifest"] = os.path.relpath(manifest, runconfig.directory)
    output.write_report(report, runconfig.path("oracle.json"))
    return report


def cmd_train(runconfig, resume=None):
    """Trains the first trial and writes checkpoint, history and metrics.

    Args:
        runconfig: RunConfig.
        resume: Checkpoint to continue from or None.
    """
    config = runconfig.train
    seed = trial_seeds(config.seed, 1)[0]
    _echo(runconfig, { "root_seed": config.seed, "trial_seeds": [ seed ] })
    dataset = runconfig.load_data()
    historyfile = runconfig.path("history.jsonl")
    checkpoint = runconfig.path(CHECKPOINT_FILE)
    state = None
    if resume is not None:
        output.printstatus("Resuming from checkpoint '{}'".format(resume))
        state = load_checkpoint(resume, config.replace(seed=seed))
        open(historyfile, "w").close()
        for record in state.history.records:
            output.append_record(_log_record(record), historyfile)
    elif os.path.exists(historyfile):
        os.remove(historyfile)

    def callback(state, record):
        output.append_record(_log_record(record), historyfile)
        every = state.config.checkpoint_every
        if every and state.epoch % every == 0:
            save_checkpoint(state, checkpoint)

    result = run_trial(config, dataset, seed,
                       runconfig.evaluation.train_fraction, state, callback)
    save_checkpoint(result.state, checkpoint)
    report = MetricsReport([ result.metrics ], [ seed ]).as_dict()
    report["convergence"] = convergence_summary(result.history)
    output.write_report(report, runconfig.path("metrics.json"))
    output.write_report(
        complexity_estimate(result.state.config, dataset,
                            len(result.splits.train)),
        runconfig.path("complexity.json"))
    return result


def _log_record(record):
    """History record without wall time (log files stay reproducible)."""
    return { key: val for key, val in record.items() if key != "wall_time" }


def _load_state(runconfig, checkpoint, dataset):
    checkpoint = runconfig.path(CHECKPOINT_FILE) if checkpoint is None \
        else checkpoint
    state = load_checkpoint(checkpoint)
    if state.train_index.size and state.train_index.max() >= dataset.n:
        raise DataError("Checkpoint was trained on a larger data set")
    return state


def cmd_eval(runconfig, checkpoint=None):
    """Evaluates a trained checkpoint on its held-out samples."""
    dataset = runconfig.load_data()
    state = _load_state(runconfig, checkpoint, dataset)
    _echo(runconfig, { "root_seed": runconfig.train.seed,
                       "trial_seeds": [ state.config.seed ] })
    metrics = evaluate_state(state, dataset, test_indices(state, dataset))
    report = MetricsReport([ metrics ], [ state.config.seed ])
    output.write_report(report.as_dict(), runconfig.path("metrics.json"))
    return report


def cmd_ablate(runconfig):
    """Trial protocol for the full model and both ablation variants."""
    config = runconfig.train
    ntrial = runconfig.evaluation.trials
    seeds = trial_seeds(config.seed, ntrial)
    _echo(runconfig, { "root_seed": config.seed, "trial_seeds": seeds })
    dataset = runconfig.load_data()
    results = run_ablation(config, dataset, ntrial,
                           runconfig.evaluation.train_fraction)
    header = [ "variant" ] + list(METRIC_NAMES)
    rows = [ [ res.variant ] + res.report.table_row() for res in results ]
    output.write_table(header, rows, runconfig.path("ablation.txt"))
    output.write_report({ res.variant: res.report.as_dict()
                          for res in results },
                        runconfig.path("ablation.json"))
    return results


def cmd_sweep(runconfig):
    """Trial protocol on every cell of the configured grid."""
    config = runconfig.train
    ntrial = runconfig.evaluation.trials
    seeds = trial_seeds(config.seed, ntrial)
    _echo(runconfig, { "root_seed": config.seed, "trial_seeds": seeds })
    dataset = runconfig.load_data()
    grid = runconfig.sweep.axes()
    cells = sweep(config, dataset, grid, ntrial,
                  runconfig.evaluation.train_fraction)
    header = list(grid) + list(METRIC_NAMES)
    rows = [ [ str(cell.params[key]) for key in grid ]
             + cell.report.table_row() for cell in cells ]
    output.write_table(header, rows, runconfig.path("sweep.txt"))
    output.write_report({ "grid": runconfig.sweep.grid, "cells": [
        { "params": cell.params, "report": cell.report.as_dict() }
        for cell in cells ] }, runconfig.path("sweep.json"))
    return cells


def cmd_audit(runconfig, checkpoint=None):
    """Independence audit and sufficiency check of a trained checkpoint."""
    dataset = runconfig.load_data()
    state = _load_state(runconfig, checkpoint, dataset)
    _echo(runconfig, { "root_seed": runconfig.train.seed,
                       "trial_seeds": [ state.config.seed ] })
    audit = independence_audit(state, dataset, runconfig.evaluation)
    sufficiency = sufficiency_check(state, dataset, runconfig.evaluation)
    report = { "independence": audit.as_dict(),
               "independence_max": audit.max_value(),
               "sufficiency": sufficiency.as_dict() }
    output.write_report(report, runconfig.path("audit.json"))
    return report


def cmd_export(runconfig, checkpoint=None):
    """Writes the joint representation of all samples as data set."""
    dataset = runconfig.load_data()
    state = _load_state(runconfig, checkpoint, dataset)
    _echo(runconfig, { "root_seed": runconfig.train.seed,
                       "trial_seeds": [ state.config.seed ] })
    return export_embeddings(state, dataset, runconfig.path("embedding"),
                             runconfig.binary)


def _defaults_epilog():
    """Configuration sections with their default values (for --help)."""
    tables = [ ("synthetic", SyntheticSpec.arguments),
               ("model", TrainConfig.model_arguments),
               ("train", TrainConfig.train_arguments),
               ("evaluation", EvalSettings.arguments),
               ("sweep", SweepSettings.arguments),
               ("output", RunConfig.output_arguments) ]
    lines = [ "configuration defaults:" ]
    for section, arguments in tables:
        defaults = format_arguments(arguments, { key: spec[3] for key, spec
                                                 in arguments.items() })
        lines.append("  [{}] ".format(section) + ", ".join(
            "{}={}".format(key, val) for key, val in defaults.items()))
    return "\n".join(textwrap.fill(line, 79, subsequent_indent=" " * 4,
                                    break_on_hyphens=False)
                     for line in lines)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ciml", description="Common and unique multi-view "
        "representation learning.")
    parser.add_argument("-v", "--verbosity", type=int, default=1,
                        help="verbosity level (0: errors only, 1: normal)")
    parser.add_argument("--version", action="version",
                        version="%(prog)s " + ciml.__version__)
    epilog = _defaults_epilog()
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    helps = {
        "synth": "generate a synthetic data set with Bayes oracle",
        "train": "train one trial, write checkpoint, history and metrics",
        "eval": "evaluate a checkpoint on its held-out samples",
        "ablate": "compare the full model with its ablation variants",
        "sweep": "sensitivity sweep over a parameter grid",
        "audit": "independence audit and sufficiency check of a checkpoint",
        "export-embeddings": "write the joint representation as data set",
    }
    for name, helpmsg in helps.items():
        sub = commands.add_parser(
            name, help=helpmsg, description=helpmsg, epilog=epilog,
            formatter_class=argparse.RawDescriptionHelpFormatter)
        sub.add_argument("config", help="INI configuration file")
        sub.add_argument("--set", action="append", default=[],
                         metavar="SECTION.KEY=VALUE",
                         help="override a configuration value (repeatable)")
        sub.add_argument("--seed", type=int,
                         help="root seed (sets train.seed, synthetic.seed)")
        sub.add_argument("--epochs", type=int, help="sets train.epochs")
        sub.add_argument("--output", help="output directory")
        if name in ("eval", "audit", "export-embeddings"):
            sub.add_argument("--checkpoint",
                             help="checkpoint file (default: "
                             "<output>/{})".format(CHECKPOINT_FILE))
        if name == "train":
            sub.add_argument("--resume", metavar="CHECKPOINT",
                             help="continue training from a checkpoint")
    return parser


def _overrides(args, parser):
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append("train.seed={:d}".format(args.seed))
        if parser.has_section("synthetic"):
            overrides.append("synthetic.seed={:d}".format(args.seed))
    if args.epochs is not None:
        overrides.append("train.epochs={:d}".format(args.epochs))
    if args.output is not None:
        overrides.append("output.directory={}".format(
            os.path.abspath(args.output)))
    return overrides


def run(argv=None, environ=None):
    """Executes a command; library errors propagate.

    Returns:
        Result of the command function.
    """
    args = build_parser().parse_args(argv)
    output.set_verbosity(args.verbosity)
    output.printheader()
    parser = read_config(args.config)
    apply_overrides(parser, _overrides(args, parser))
    basedir = os.path.dirname(os.path.abspath(args.config))
    runconfig = RunConfig(parser, basedir, environ)
    torch.set_num_threads(runconfig.train.threads)
    if args.command == "synth":
        return cmd_synth(runconfig)
    elif args.command == "train":
        return cmd_train(runconfig, args.resume)
    elif args.command == "eval":
        return cmd_eval(runconfig, args.checkpoint)
    elif args.command == "ablate":
        return cmd_ablate(runconfig)
    elif args.command == "sweep":
        return cmd_sweep(runconfig)
    elif args.command == "audit":
        return cmd_audit(runconfig, args.checkpoint)
    return cmd_export(runconfig, args.checkpoint)


def main(argv=None):
    """Entry point of the ciml script, returns the exit code."""
    try:
        run(argv)
    except CimlError as exc:
        output.error(str(exc), exc.exitcode)
    return 0
