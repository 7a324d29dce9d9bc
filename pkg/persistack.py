#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""persistack: extract the persistent neuronal structure from a microscopy z-stack.

The run command loads a stack, removes salt-and-pepper noise from its maximum
projection and from each of its slices (median filter, then Huang's automatic
threshold), builds a filtration of the binarized projection against the
binarized slices, computes the 0-dimensional barcode of that filtration, and
keeps the components that persist through every slice as the neuron. The
compare command measures an automatic tracing against a manual one; the sweep
command runs the pipeline for several filter lengths and compares each result
to a manual tracing.

Usage:
    persistack.py run --input STACK [STACK ...] [--radius 10] [--shape square]
                      [--connectivity 8] [--slice-order acquisition]
                      [--threshold huang|fixed:LEVEL] [--emit mask,barcode,colors,report]
                      [--out DIR] [--config FILE] [--jobs N] [-v]
    persistack.py compare (--auto MASK --manual MASK | --dataset DIR) [--out DIR]
    persistack.py sweep --input STACK [...] --manual MASK [--radii 5,10,15] [--out DIR]

Artifacts (for --emit) are: mask, barcode, barcode-plot, colors, report, levels,
stages. Exit status is 0 on success, 2 when no persistent structure was found,
and 1 on error.

This script is copyright 2024 by the persistack authors. It is licensed under
the GNU GPL, either version 3 or (at your option) any later version. See the
file LICENSE.md for details.
"""


import argparse
import dataclasses
import json
import sys
import warnings

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import image_io                 # persistack
import labeling                 # same
import metrics                  # same
import persistence              # same
import pipeline_config          # same
import preprocess               # same
import raster                   # same
import run_logger               # same
from pipeline_config import ConfigError, PipelineConfig
from raster import BinaryImage, ZStack
from run_logger import log_it


EXIT_SUCCESS, EXIT_ERROR, EXIT_WARNING = 0, 1, 2


class StageError(RuntimeError):
    """A pipeline stage failed. STAGE names it; REPORT, if set, is the partial run
    report written before giving up.
    """
    def __init__(self, stage: str,
                 cause: BaseException) -> None:
        RuntimeError.__init__(self, f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.report: Optional['RunReport'] = None


@dataclasses.dataclass
class RunReport:
    """What happened during one run. Produced for every run, whatever its outcome."""
    slice_levels: List[int] = dataclasses.field(default_factory=list)
    projection_level: Optional[int] = None
    component_count: int = 0
    births_histogram: Dict[int, int] = dataclasses.field(default_factory=dict)
    stability_level: Optional[int] = None
    neuron_area: int = 0
    persistent_components: List[Dict[str, Any]] = dataclasses.field(default_factory=list)
    warnings: List[str] = dataclasses.field(default_factory=list)
    stage_seconds: Dict[str, float] = dataclasses.field(default_factory=dict)
    artifacts: List[str] = dataclasses.field(default_factory=list)
    error: Optional[str] = None

    @property
    def exit_status(self) -> int:
        if self.error:
            return EXIT_ERROR
        return EXIT_WARNING if self.warnings else EXIT_SUCCESS

    def as_dict(self) -> Dict[str, Any]:
        ret = dataclasses.asdict(self)
        ret['births_histogram'] = {str(k): v for k, v in self.births_histogram.items()}
        ret['exit_status'] = self.exit_status
        return ret


@dataclasses.dataclass(frozen=True)
class PipelineResult:
    """The in-memory products of one pass of the method over a stack."""
    preprocessed: preprocess.PreprocessedStack
    filtration: persistence.Filtration
    barcode: persistence.Barcode
    neuron_mask: BinaryImage
    color_map: persistence.ColorMap
    warnings: Tuple[str, ...] = ()


def _staged(clock: run_logger.StageClock,
            name: str,
            func, *args, **kwargs):
    """Run FUNC inside stage NAME, tagging any failure with the stage's name."""
    with clock.stage(name):
        try:
            return func(*args, **kwargs)
        except StageError:
            raise
        except Exception as errrr:
            raise StageError(name, errrr) from errrr


def _extract(filtration: persistence.Filtration) -> Tuple[BinaryImage, List[str]]:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', persistence.NoPersistentStructureWarning)
        mask = persistence.extract_persistent_structure(filtration)
    return mask, [str(w.message) for w in caught if issubclass(w.category, persistence.NoPersistentStructureWarning)]


def process_stack(stack: ZStack,
                  config: PipelineConfig,
                  clock: Optional[run_logger.StageClock] = None,
                  progress: bool = False) -> PipelineResult:
    """Run the whole method over STACK, in memory, with the settings in CONFIG."""
    clock = clock or run_logger.StageClock()
    if config.slice_order == 'reversed':
        stack = stack.reversed()
    params = preprocess.FilterParams(radius=config.radius, neighborhood_shape=config.neighborhood_shape)

    projection = _staged(clock, 'project', raster.max_projection, stack)
    done = _staged(clock, 'preprocess', preprocess.preprocess_stack_detailed, stack, params,
                   fixed_level=config.fixed_level, jobs=config.jobs, progress=progress, projection=projection)
    filtration = _staged(clock, 'filtration', persistence.build_filtration, done.projection_mask, done.slice_masks,
                         connectivity=config.connectivity, jobs=config.jobs)
    barcode = _staged(clock, 'barcode', persistence.compute_barcode, filtration)
    neuron_mask, found_warnings = _staged(clock, 'extract', _extract, filtration)
    color_map = _staged(clock, 'colors', persistence.persistence_color_map, filtration)
    for w in found_warnings:
        log_it(f"WARNING: {w}", 0)
    return PipelineResult(preprocessed=done, filtration=filtration, barcode=barcode, neuron_mask=neuron_mask,
                          color_map=color_map, warnings=tuple(found_warnings))


def render_barcode(barcode: persistence.Barcode,
                   path: Union[str, Path]) -> Path:
    """Draw BARCODE as horizontal bars, one per interval, ordered by birth and colored
    by survival depth.
    """
    import matplotlib                   # Only needed when a plot is requested.
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    path = Path(path)
    palette = persistence.depth_palette(barcode.level_count)
    ordered = sorted(barcode.intervals, key=lambda iv: (iv.birth, iv.component_id))
    fig, ax = plt.subplots(figsize=(6, max(2.0, 0.2 * len(ordered) + 1)))
    try:
        for row, iv in enumerate(ordered):
            color = [c / 255 for c in palette[barcode.level_count - iv.birth]]
            ax.barh(row, max(iv.persistence, 0.05), left=iv.birth, height=0.7, color=color)
        ax.set_xlim(0, max(1, barcode.level_count))
        ax.set_ylim(-1, max(1, len(ordered)))
        ax.set_xlabel("filtration level")
        ax.set_yticks([])
        ax.set_title(f"0-dimensional barcode ({len(ordered)} classes)")
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=100, bbox_inches='tight')
    finally:
        plt.close(fig)
    return path


def export_barcode(barcode: persistence.Barcode,
                   path: Union[str, Path],
                   plot: bool = False) -> List[Path]:
    """Write BARCODE as JSON to PATH and, if PLOT is True, a rendering of it to a PNG
    with the same stem. Returns the paths written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(image_io.jsonify(barcode.as_dict()), encoding='utf-8')
    ret = [path]
    if plot:
        ret.append(render_barcode(barcode, path.with_suffix('.png')))
    return ret


def load_barcode(path: Union[str, Path]) -> persistence.Barcode:
    return persistence.Barcode.from_dict(json.loads(Path(path).read_text(encoding='utf-8')))


def write_artifacts(result: PipelineResult,
                    config: PipelineConfig) -> List[Path]:
    """Write the artifacts selected in CONFIG.outputs to CONFIG.out_dir."""
    out, emit = config.out_dir, config.outputs
    written = [][:]
    if 'mask' in emit:
        written.append(image_io.save_mask(result.neuron_mask, out / 'neuron_mask.png'))
    if 'barcode' in emit or 'barcode-plot' in emit:
        written.extend(export_barcode(result.barcode, out / 'barcode.json', plot='barcode-plot' in emit))
    if 'colors' in emit:
        written.append(image_io.save_color_map(result.color_map, out / 'colors.png'))
    if 'levels' in emit:
        for i in range(result.filtration.level_count + 1):
            written.append(image_io.save_mask(persistence.materialize(result.filtration, i),
                                              out / 'levels' / f'level_{i}.png'))
    if 'stages' in emit:
        done = result.preprocessed
        written.append(image_io.save_gray(done.projection, out / 'stages' / 'projection.png'))
        written.append(image_io.save_gray(done.projection_result.filtered, out / 'stages' / 'filtered.png'))
        written.append(image_io.save_mask(done.projection_mask, out / 'stages' / 'thresholded.png'))
    return written


def _fill_report(report: RunReport,
                 result: PipelineResult) -> None:
    done = result.preprocessed
    report.slice_levels = done.slice_levels
    report.projection_level = done.projection_result.threshold.level
    report.component_count = result.filtration.component_count
    report.births_histogram = result.barcode.births_histogram()
    report.stability_level = persistence.stability_level(result.filtration)
    report.neuron_area = raster.foreground_count(result.neuron_mask)
    report.persistent_components = [dataclasses.asdict(s) for s in labeling.component_stats(result.filtration.top)
                                    if result.filtration.survival[s.id] == result.filtration.level_count]
    report.warnings.extend(result.warnings)


def run_pipeline(config: PipelineConfig,
                 progress: bool = False) -> RunReport:
    """Run the method end to end as described by CONFIG: load, process, write the
    selected artifacts. Returns the run report; raises StageError (with the partial
    report attached) if any stage fails.
    """
    config = pipeline_config.resolve_config(config.as_dict())          # validate before touching any file
    run_logger.verbosity_level = max(run_logger.verbosity_level, config.verbosity)
    clock = run_logger.StageClock()
    report = RunReport()

    config.out_dir.mkdir(parents=True, exist_ok=True)
    run_logger.the_logger.add_logfile(config.out_dir / 'run.log')
    try:
        log_it(f"INFO: starting run on {', '.join(config.input)}", 1)
        report.artifacts.append(str(pipeline_config.save_resolved(config, config.out_dir / 'config.json')))
        stack = _staged(clock, 'load', image_io.load_stack, list(config.input), spacing=config.spacing)
        log_it(f"    loaded {stack!r}", 1)
        result = process_stack(stack, config, clock=clock, progress=progress)
        _staged(clock, 'report', _fill_report, report, result)
        written = _staged(clock, 'export', write_artifacts, result, config)
        report.artifacts.extend(str(p) for p in written)
    except StageError as errrr:
        report.error = str(errrr)
        errrr.report = report
        raise
    finally:
        report.stage_seconds = dict(clock.seconds)
        if 'report' in config.outputs:
            report_path = config.out_dir / 'report.json'
            report.artifacts.append(str(report_path))
            report_path.write_text(image_io.jsonify(report.as_dict()), encoding='utf-8')
        run_logger.the_logger.close_logfiles()

    log_it(f"INFO: {report.component_count} components, neuron area {report.neuron_area} pixels, "
           f"total {clock.total():.2f} s", 1)
    return report


def pair_dataset(dataset: Path) -> List[Tuple[str, Path, Path]]:
    """Match files in DATASET/auto with files of the same name in DATASET/manual.
    Returns (name, auto_path, manual_path) triples sorted by name.
    """
    auto_dir, manual_dir = dataset / 'auto', dataset / 'manual'
    if not auto_dir.is_dir() or not manual_dir.is_dir():
        raise image_io.StackReadError("a dataset needs 'auto' and 'manual' subdirectories", path=dataset)
    autos = {p.name: p for p in auto_dir.iterdir() if p.suffix.casefold() in image_io.supported_suffixes}
    manuals = {p.name: p for p in manual_dir.iterdir() if p.suffix.casefold() in image_io.supported_suffixes}
    for name in sorted(set(autos) ^ set(manuals)):
        warnings.warn(f"Skipping {name}: it has no counterpart in the other folder of {dataset}.")
    ret = [(name, autos[name], manuals[name]) for name in sorted(set(autos) & set(manuals))]
    if not ret:
        raise image_io.StackReadError("no auto/manual pairs found", path=dataset)
    return ret


def _compare_files(label: str,
                   auto_path: Path,
                   manual_path: Path) -> Tuple[metrics.AccuracyRow, Dict[str, Any]]:
    try:
        comparison = metrics.compare_tracings(image_io.load_mask(auto_path), image_io.load_mask(manual_path))
    except Exception as errrr:
        raise StageError('compare', RuntimeError(f"comparing {auto_path} with {manual_path}: {errrr}")) from errrr
    record = dict(comparison.as_dict(), label=label, auto=str(auto_path), manual=str(manual_path))
    return comparison.row(label), record


def write_accuracy_report(rows: Sequence[metrics.AccuracyRow],
                          records: Sequence[Dict[str, Any]],
                          out_dir: Path,
                          stem: str,
                          first_column: str,
                          mean: bool) -> List[Path]:
    """Write ROWS (plus a mean row, if MEAN) as STEM.json and an aligned STEM.txt table."""
    out_dir.mkdir(parents=True, exist_ok=True)
    table_rows = list(rows) + ([metrics.mean_row(rows)] if mean else [])
    doc = {'rows': list(records)}
    if mean:
        doc['mean'] = table_rows[-1].as_dict()
    json_path, text_path = out_dir / f'{stem}.json', out_dir / f'{stem}.txt'
    json_path.write_text(image_io.jsonify(doc), encoding='utf-8')
    text_path.write_text(metrics.format_table(table_rows, first_column=first_column), encoding='utf-8')
    return [json_path, text_path]


def compare_command(auto_mask_path: Optional[Union[str, Path]],
                    manual_mask_path: Optional[Union[str, Path]],
                    out_dir: Union[str, Path],
                    dataset: Optional[Union[str, Path]] = None) -> List[Path]:
    """Compare one automatic tracing with one manual tracing, or every pair in
    DATASET (in which case a mean row is added). Writes comparison.json and
    comparison.txt to OUT_DIR and returns their paths.
    """
    pairs = [][:]
    if auto_mask_path or manual_mask_path:
        if not (auto_mask_path and manual_mask_path):
            raise ConfigError("Comparing needs both an automatic and a manual mask!")
        pairs.append((Path(auto_mask_path).stem, Path(auto_mask_path), Path(manual_mask_path)))
    if dataset:
        pairs.extend(pair_dataset(Path(dataset)))
    if not pairs:
        raise ConfigError("Nothing to compare: give --auto and --manual, or --dataset!")

    rows, records = [][:], [][:]
    for label, auto_path, manual_path in pairs:
        row, record = _compare_files(label, auto_path, manual_path)
        rows.append(row)
        records.append(record)
        log_it(f"    {label}: {metrics.format_table([row]).splitlines()[-1]}", 2)
    return write_accuracy_report(rows, records, Path(out_dir), 'comparison', 'image', mean=bool(dataset))


def sweep_command(config: PipelineConfig,
                  manual_mask_path: Union[str, Path],
                  radii: Sequence[int]) -> List[Path]:
    """Run the method once per filter radius in RADII and compare each neuron mask
    with the manual tracing, one table row per radius.
    """
    if not radii:
        raise ConfigError("A sweep needs at least one radius!")
    configs = [pipeline_config.resolve_config(dict(config.as_dict(), radius=r)) for r in radii]
    stack = image_io.load_stack(list(config.input), spacing=config.spacing)
    manual = image_io.load_mask(manual_mask_path)

    rows, records = [][:], [][:]
    for c in configs:
        log_it(f"INFO: sweep, radius {c.radius}", 1)
        result = process_stack(stack, c)
        mask_path = image_io.save_mask(result.neuron_mask, c.out_dir / f'radius_{c.radius}' / 'neuron_mask.png')
        comparison = metrics.compare_tracings(result.neuron_mask, manual)
        rows.append(comparison.row(str(c.radius)))
        records.append(dict(comparison.as_dict(), label=str(c.radius), radius=c.radius, mask=str(mask_path),
                            warnings=list(result.warnings)))
    return write_accuracy_report(rows, records, config.out_dir, 'sweep', 'length of filter', mean=False)


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('-i', '--input', nargs='+', help="Stack source: a multi-page TIFF, a directory, a glob "
                                                         "pattern, or an ordered list of slice files.")
    parser.add_argument('-c', '--config', type=Path, help="JSON config file; command-line flags override it.")
    parser.add_argument('-r', '--radius', type=int, help="Median filter length in pixels (default 10).")
    parser.add_argument('--shape', dest='neighborhood_shape', choices=['square', 'disc'],
                        help="Median filter neighborhood (default square).")
    parser.add_argument('--connectivity', type=int, choices=[4, 8], help="Foreground connectivity (default 8).")
    parser.add_argument('--slice-order', dest='slice_order', choices=['acquisition', 'reversed'],
                        help="Order in which slices are consumed by the filtration (default acquisition).")
    parser.add_argument('--threshold', dest='threshold_mode', help="'huang' (default) or 'fixed:LEVEL'.")
    parser.add_argument('--emit', dest='outputs', help="Comma-separated artifacts: " +
                                                       ', '.join(sorted(pipeline_config.known_artifacts)))
    parser.add_argument('-o', '--out', dest='out_dir', type=Path, help="Output directory.")
    parser.add_argument('-j', '--jobs', type=int, help="Worker threads (default 1).")
    parser.add_argument('--spacing', type=float, help="Distance between planes (metadata only).")
    parser.add_argument('-v', '--verbose', dest='verbosity', action='count', help="More output; repeat for more.")


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {k: v for k, v in vars(args).items() if k in pipeline_config.DEFAULT_CONFIG}
    return pipeline_config.resolve_config(pipeline_config.ConfigLayers(config_file=args.config, overrides=overrides))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='persistack', description=__doc__.strip().split('\n')[0],
                                     epilog=__doc__.strip().split('\n\n')[-2])
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help="Extract the persistent structure from a stack.")
    _add_pipeline_flags(run)

    compare = sub.add_parser('compare', help="Compare automatic tracings with manual ones.")
    compare.add_argument('--auto', type=Path, help="Automatic tracing mask.")
    compare.add_argument('--manual', type=Path, help="Manual tracing mask.")
    compare.add_argument('--dataset', type=Path, help="Directory with auto/ and manual/ subdirectories of masks.")
    compare.add_argument('-o', '--out', dest='out_dir', type=Path, default=Path('persistack-compare'))
    compare.add_argument('-v', '--verbose', dest='verbosity', action='count', default=0)

    sweep = sub.add_parser('sweep', help="Compare results for several filter lengths with a manual tracing.")
    _add_pipeline_flags(sweep)
    sweep.add_argument('--manual', type=Path, required=True, help="Manual tracing mask.")
    sweep.add_argument('--radii', default='5,10,15', help="Comma-separated filter lengths (default 5,10,15).")
    return parser


def main(argv: Sequence[str]) -> int:
    """Parse ARGV, do what it asks, and return the process exit status."""
    args = build_parser().parse_args(list(argv))
    run_logger.verbosity_level = args.verbosity or 0
    try:
        if args.command == 'run':
            return run_pipeline(_config_from_args(args), progress=run_logger.verbosity_level >= 1).exit_status
        elif args.command == 'compare':
            written = compare_command(args.auto, args.manual, args.out_dir, dataset=args.dataset)
            print(written[-1].read_text(encoding='utf-8'), end='')
            return EXIT_SUCCESS
        elif args.command == 'sweep':
            try:
                radii = [int(r) for r in args.radii.split(',') if r.strip()]
            except ValueError:
                raise ConfigError(f"Radii must be comma-separated integers, not {args.radii!r}!") from None
            written = sweep_command(_config_from_args(args), args.manual, radii)
            print(written[-1].read_text(encoding='utf-8'), end='')
            return EXIT_SUCCESS
    except ConfigError as errrr:
        print(f"ERROR: invalid configuration: {errrr}", file=sys.stderr)
    except StageError as errrr:
        print(f"ERROR: stage '{errrr.stage}' failed. The system said: {errrr.cause}", file=sys.stderr)
    except (image_io.StackReadError, metrics.UndefinedRatioError, raster.RasterError, OSError) as errrr:
        print(f"ERROR: {errrr}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
