"""End-to-end tests for the persistack command-line driver."""


import json
import time

from pathlib import Path

import joblib
import numpy as np
import pytest
import tifffile
from PIL import Image

import image_io
import labeling
import persistack
import persistence
import pipeline_config
from raster import BinaryImage, GrayImage, ZStack


def _save_stack(stack: ZStack, path: Path) -> Path:
    tifffile.imwrite(path, np.stack([s.pixels for s in stack]), photometric='minisblack')
    return path


@pytest.fixture
def stack_file(tmp_path, small_stack) -> Path:
    return _save_stack(small_stack, tmp_path / 'stack.tif')


def _run(*args) -> int:
    return persistack.main(['run', *[str(a) for a in args]])


def test_run_writes_every_artifact(tmp_path, stack_file):
    out = tmp_path / 'out'
    status = _run('--input', stack_file, '--out', out, '--radius', 2,
                  '--emit', 'mask,barcode,barcode-plot,colors,report,levels,stages')
    assert status == persistack.EXIT_SUCCESS

    for name in ('neuron_mask.png', 'barcode.json', 'barcode.png', 'colors.png', 'colors.palette.json',
                 'report.json', 'config.json', 'run.log', 'stages/projection.png', 'stages/filtered.png',
                 'stages/thresholded.png'):
        assert (out / name).is_file(), name
    assert sorted(p.name for p in (out / 'levels').iterdir()) == [f'level_{i}.png' for i in range(7)]

    neuron = image_io.load_mask(out / 'neuron_mask.png')
    assert neuron.foreground[30, 30]            # the bar is in every slice
    assert not neuron.foreground[8, 8]          # the blob skips the third slice

    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert report['exit_status'] == 0
    assert report['error'] is None
    assert len(report['slice_levels']) == 6
    assert report['component_count'] == 2
    assert report['births_histogram'] == {'0': 1, '4': 1}
    assert report['persistent_components'][0]['area'] == report['neuron_area']
    assert {'load', 'project', 'preprocess', 'filtration', 'barcode', 'extract', 'export'} <= set(report['stage_seconds'])

    barcode = persistack.load_barcode(out / 'barcode.json')
    assert barcode.level_count == 6
    assert sorted(iv.birth for iv in barcode.intervals) == [0, 4]


def test_default_artifacts(tmp_path, stack_file):
    out = tmp_path / 'out'
    assert _run('--input', stack_file, '--out', out, '--radius', 2) == 0
    assert {p.name for p in out.iterdir()} == {'neuron_mask.png', 'barcode.json', 'colors.png',
                                               'colors.palette.json', 'report.json', 'config.json', 'run.log'}


def test_run_is_deterministic_across_thread_counts(tmp_path, stack_file):
    outputs = [][:]
    for jobs in (1, 3):
        out = tmp_path / f'jobs{jobs}'
        assert _run('--input', stack_file, '--out', out, '--radius', 2, '--jobs', jobs) == 0
        outputs.append(out)
    for name in ('neuron_mask.png', 'barcode.json', 'colors.png'):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


def test_reversed_slice_order(tmp_path, small_stack):
    config = pipeline_config.resolve_config(pipeline_config.ConfigLayers(search_dirs=[], overrides={
        'input': 'unused.tif', 'radius': 2, 'slice_order': 'reversed'}))
    result = persistack.process_stack(small_stack, config)
    # read from the other end, the blob survives three slices instead of two
    assert result.barcode.births_histogram() == {0: 1, 3: 1}


def test_no_persistent_structure_exits_with_warning(tmp_path):
    left, right = np.zeros((12, 12), dtype=np.uint8), np.zeros((12, 12), dtype=np.uint8)
    left[2:6, 1:4] = 200
    right[6:10, 8:11] = 200
    stack_path = _save_stack(ZStack((GrayImage(left), GrayImage(right))), tmp_path / 'apart.tif')

    out = tmp_path / 'out'
    assert _run('--input', stack_path, '--out', out, '--radius', 0) == persistack.EXIT_WARNING
    assert not image_io.load_mask(out / 'neuron_mask.png').foreground.any()
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert report['exit_status'] == 2
    assert report['warnings']


def test_invalid_config_fails_before_any_io(tmp_path, stack_file):
    out = tmp_path / 'out'
    assert _run('--input', stack_file, '--out', out, '--radius', -1) == persistack.EXIT_ERROR
    assert _run('--input', stack_file, '--out', out, '--emit', 'mask,hologram') == persistack.EXIT_ERROR
    assert not out.exists()


def test_config_file_is_layered_under_flags(tmp_path, stack_file):
    out = tmp_path / 'out'
    cfg = tmp_path / 'cfg.json'
    cfg.write_text(json.dumps({'radius': 1, 'connectivity': 4, 'outputs': ['mask']}), encoding='utf-8')
    assert _run('--input', stack_file, '--out', out, '--config', cfg, '--radius', 2) == 0
    saved = json.loads((out / 'config.json').read_text(encoding='utf-8'))
    assert (saved['radius'], saved['connectivity'], saved['outputs']) == (2, 4, ['mask'])


def test_constant_slice_is_a_stage_error(tmp_path, small_stack):
    flat = GrayImage(np.full((64, 64), 10))
    stack_path = _save_stack(ZStack(tuple(small_stack.slices) + (flat,)), tmp_path / 'flat.tif')
    out = tmp_path / 'out'
    assert _run('--input', stack_path, '--out', out, '--radius', 2) == persistack.EXIT_ERROR
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert report['exit_status'] == 1
    assert report['error'].startswith('[preprocess]')
    assert 'slice 7' in report['error']


def test_run_pipeline_raises_stage_error_with_report(tmp_path):
    config = pipeline_config.resolve_config(pipeline_config.ConfigLayers(search_dirs=[], overrides={
        'input': str(tmp_path / 'missing.tif'), 'out_dir': tmp_path / 'out', 'outputs': 'mask'}))
    with pytest.raises(persistack.StageError) as excinfo:
        persistack.run_pipeline(config)
    assert excinfo.value.stage == 'load'
    assert excinfo.value.report.exit_status == persistack.EXIT_ERROR


def test_report_failure_is_a_stage_error(tmp_path, stack_file, monkeypatch):
    def broken(labels):
        raise ValueError("no statistics today")
    monkeypatch.setattr(labeling, 'component_stats', broken)

    out = tmp_path / 'out'
    assert _run('--input', stack_file, '--out', out, '--radius', 2) == persistack.EXIT_ERROR
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert report['exit_status'] == 1
    assert report['error'].startswith('[report]')
    assert 'no statistics today' in report['error']


def test_export_barcode(tmp_path):
    barcode = persistence.Barcode(level_count=3, intervals=(persistence.Interval(1, 0, 3, 10),
                                                            persistence.Interval(2, 3, 3, 4)))
    written = persistack.export_barcode(barcode, tmp_path / 'b.json', plot=True)
    assert written == [tmp_path / 'b.json', tmp_path / 'b.png']
    assert persistack.load_barcode(written[0]) == barcode
    with Image.open(written[1]) as im:
        assert im.size[0] > 0


def _plus_mask(path: Path, arms: int = 4) -> Path:
    arr = np.zeros((21, 21), dtype=bool)
    arr[10, 2:11] = arr[2:11, 10] = True
    if arms > 2:
        arr[11:19, 10] = True
    if arms > 3:
        arr[10, 11:19] = True
    return image_io.save_mask(BinaryImage(arr), path)


def test_compare_one_pair(tmp_path, capsys):
    manual = _plus_mask(tmp_path / 'manual.png')
    auto = _plus_mask(tmp_path / 'auto.png', arms=3)
    out = tmp_path / 'cmp'
    assert persistack.main(['compare', '--auto', str(auto), '--manual', str(manual), '--out', str(out)]) == 0

    doc = json.loads((out / 'comparison.json').read_text(encoding='utf-8'))
    assert doc['rows'][0]['branch_pct'] == 75.0
    assert doc['rows'][0]['area_spill_pct'] == 0.0
    assert 'mean' not in doc
    assert '75.00%' in capsys.readouterr().out


def test_compare_dataset_adds_mean_row(tmp_path):
    for sub in ('auto', 'manual'):
        (tmp_path / 'data' / sub).mkdir(parents=True)
    for name, arms in (('n1.png', 4), ('n2.png', 3)):
        _plus_mask(tmp_path / 'data' / 'manual' / name)
        _plus_mask(tmp_path / 'data' / 'auto' / name, arms=arms)
    _plus_mask(tmp_path / 'data' / 'auto' / 'orphan.png')

    with pytest.warns(UserWarning, match='orphan'):
        written = persistack.compare_command(None, None, tmp_path / 'cmp', dataset=tmp_path / 'data')
    doc = json.loads(written[0].read_text(encoding='utf-8'))
    assert [r['label'] for r in doc['rows']] == ['n1.png', 'n2.png']
    assert doc['mean']['branch_pct'] == 87.5
    assert written[1].read_text(encoding='utf-8').splitlines()[-1].startswith('mean')


def test_compare_with_empty_manual_is_an_error(tmp_path):
    empty = image_io.save_mask(BinaryImage.empty(5, 5), tmp_path / 'empty.png')
    auto = _plus_mask(tmp_path / 'auto.png')
    assert persistack.main(['compare', '--auto', str(auto), '--manual', str(empty),
                            '--out', str(tmp_path / 'cmp')]) == persistack.EXIT_ERROR


def test_compare_needs_both_masks(tmp_path):
    auto = _plus_mask(tmp_path / 'auto.png')
    assert persistack.main(['compare', '--auto', str(auto), '--out', str(tmp_path / 'cmp')]) == persistack.EXIT_ERROR


def test_sweep(tmp_path, stack_file):
    manual = np.zeros((64, 64), dtype=bool)
    manual[28:36, 6:58] = True
    manual_path = image_io.save_mask(BinaryImage(manual), tmp_path / 'manual.png')
    out = tmp_path / 'sweep'
    assert persistack.main(['sweep', '--input', str(stack_file), '--manual', str(manual_path),
                            '--radii', '1,2', '--out', str(out)]) == 0

    doc = json.loads((out / 'sweep.json').read_text(encoding='utf-8'))
    assert [r['radius'] for r in doc['rows']] == [1, 2]
    assert all(r['area_recall_pct'] >= 90 for r in doc['rows'])
    assert (out / 'radius_2' / 'neuron_mask.png').is_file()
    table = (out / 'sweep.txt').read_text(encoding='utf-8').splitlines()
    assert table[0].startswith('length of filter')
    assert len(table) == 4


def test_sweep_rejects_bad_radii(tmp_path, stack_file):
    manual = image_io.save_mask(BinaryImage.empty(64, 64), tmp_path / 'manual.png')
    assert persistack.main(['sweep', '--input', str(stack_file), '--manual', str(manual),
                            '--radii', 'ten', '--out', str(tmp_path / 'sweep')]) == persistack.EXIT_ERROR


@pytest.mark.slow
def test_large_16_bit_stack_is_fast_and_deterministic(tmp_path):
    rng = np.random.default_rng(11)
    side = 1024
    base = rng.integers(800, 1200, size=(side, side))
    base[400:620, 100:900] = 30000
    slices = [][:]
    for _ in range(8):
        arr = base.copy()
        noise = rng.random((side, side))
        arr[noise < 0.02] = 65535
        arr[noise > 0.98] = 0
        slices.append(GrayImage(arr, bit_depth=16))
    stack_path = _save_stack(ZStack(tuple(slices)), tmp_path / 'big.tif')

    # ten seconds on four cores, scaled for smaller machines
    budget = 10.0 * max(1.0, 4 / joblib.cpu_count())
    digests = [][:]
    for jobs in (4, 1):
        out = tmp_path / f'out{jobs}'
        started = time.perf_counter()
        assert _run('--input', stack_path, '--out', out, '--jobs', jobs, '--emit', 'mask,barcode') == 0
        if jobs == 4:
            assert time.perf_counter() - started < budget
        digests.append([(out / n).read_bytes() for n in ('neuron_mask.png', 'barcode.json')])
    assert digests[0] == digests[1]
