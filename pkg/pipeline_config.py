#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Layered configuration for persistack runs.

Settings are looked up through a ChainMap of layers. From lowest to highest
priority, these are:

  1. the built-in defaults (DEFAULT_CONFIG, below);
  2. any "persistack preferences" files found in the places where config files
     are usually kept on Linux, macOS, and Windows, system-level locations
     first and user-level locations later, so that users can override what an
     administrator sets up;
  3. a config file named explicitly on the command line;
  4. the command-line flags the user actually typed.

Every file layer is a JSON-serialized dictionary whose keys are the field names
of PipelineConfig. Once the layers are assembled, resolve_config() normalizes
and validates the result into a PipelineConfig. All validation happens before
any input is read or any output is written.

This script is copyright 2024 by the persistack authors. It is licensed under
the GNU GPL, either version 3 or (at your option) any later version. See the
file LICENSE.md for details.
"""


import collections
import dataclasses
import json
import os
import warnings

from pathlib import Path
from typing import Any, Dict, FrozenSet, Hashable, Iterator, List, Mapping, Optional, Tuple, Union

import image_io                     # persistack


appname = "persistack"

known_artifacts = frozenset({'mask', 'barcode', 'barcode-plot', 'colors', 'report', 'levels', 'stages'})

DEFAULT_CONFIG = {
    'input': None,
    'radius': 10,                   # the median filter's length, in pixels
    'neighborhood_shape': 'square',
    'connectivity': 8,
    'slice_order': 'acquisition',
    'threshold_mode': 'huang',
    'outputs': ['mask', 'barcode', 'colors', 'report'],
    'out_dir': 'persistack-output',
    'jobs': 1,
    'verbosity': 0,
    'spacing': None,
}


class ConfigError(ValueError):
    """The assembled configuration can't describe a valid run."""


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    input: Tuple[str, ...]
    radius: int = 10
    neighborhood_shape: str = 'square'
    connectivity: int = 8
    slice_order: str = 'acquisition'
    threshold_mode: str = 'huang'
    outputs: FrozenSet[str] = frozenset({'mask', 'barcode', 'colors', 'report'})
    out_dir: Path = Path(DEFAULT_CONFIG['out_dir'])
    jobs: int = 1
    verbosity: int = 0
    spacing: Optional[float] = None

    @property
    def fixed_level(self) -> Optional[int]:
        """The user-supplied threshold, or None when Huang's method chooses one."""
        if self.threshold_mode == 'huang':
            return None
        return int(self.threshold_mode.split(':', 1)[1])

    def as_dict(self) -> Dict[str, Any]:
        ret = dataclasses.asdict(self)
        ret['input'] = list(self.input)
        ret['outputs'] = sorted(self.outputs)
        return ret


def config_dirs() -> List[Path]:
    """Directories searched for preferences files, lowest priority first."""
    home = Path(os.path.expanduser('~'))
    dirs = [
        Path('/etc') / appname,                                         # Unix
        Path('/Library/Preferences') / appname,                         # macOS
        home / 'Library/Preferences' / appname,                         # macOS
        home / ('.' + appname),                                         # Unix
        home / '.config' / appname,                                     # Unix
        Path(os.environ['XDG_CONFIG_HOME']) / appname if os.environ.get('XDG_CONFIG_HOME') else None,  # Unix
        Path(os.environ['LOCALAPPDATA']) / appname if os.environ.get('LOCALAPPDATA') else None,        # Windoze
    ]
    return [d for d in dirs if d]


def _read_layer(path: Path,
                required: bool) -> Dict[str, Any]:
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as errrr:
        if required:
            raise ConfigError(f"Unable to read config file {path}! The system said: {errrr}") from errrr
        warnings.warn(f"Unable to open prefs file {path}. The system said: {errrr}")
        return dict()
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must contain a JSON object, not a {type(data).__name__}!")
    unknown = set(data) - set(DEFAULT_CONFIG)
    if unknown:
        warnings.warn(f"Ignoring unknown settings in {path}: {', '.join(sorted(unknown))}")
    return {k: v for k, v in data.items() if k in DEFAULT_CONFIG}


class ConfigLayers(collections.abc.Mapping):
    """Read-only view of the layered settings. The topmost layer holds only the
    overrides actually supplied (e.g., the command-line flags the user typed), so a
    flag that wasn't given never hides a value from a file.
    """
    def __init__(self, defaults: Optional[Mapping[str, Any]] = None,
                 config_file: Optional[Union[str, Path]] = None,
                 overrides: Optional[Mapping[str, Any]] = None,
                 search_dirs: Optional[List[Path]] = None) -> None:
        self.data = collections.ChainMap(dict(DEFAULT_CONFIG if defaults is None else defaults))
        self.sources = ['defaults']
        for d in (config_dirs() if search_dirs is None else search_dirs):
            p = d / f"{appname} preferences"
            if p.exists():
                self.data = self.data.new_child(_read_layer(p, required=False))
                self.sources.append(str(p))
        if config_file:
            self.data = self.data.new_child(_read_layer(Path(config_file), required=True))
            self.sources.append(str(config_file))
        self.data = self.data.new_child({k: v for k, v in (overrides or dict()).items() if v is not None})
        self.sources.append('command line')

    def __getitem__(self, key: Hashable) -> Any:
        return self.data[key]

    def __iter__(self) -> Iterator:
        return iter(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"< {appname} settings from {', '.join(self.sources)} >"


def _as_int(key: str, value: Any) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"Setting {key!r} must be an integer, not {value!r}!")
    try:
        ret = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"Setting {key!r} must be an integer, not {value!r}!") from None
    if ret != value and not isinstance(value, str):
        raise ConfigError(f"Setting {key!r} must be an integer, not {value!r}!")
    return ret


def _as_list(value: Any) -> List[str]:
    if value is None:
        return [][:]
    if isinstance(value, (str, Path)):
        return [s.strip() for s in str(value).split(',') if s.strip()]
    return [str(v).strip() for v in value if str(v).strip()]


def normalize_threshold_mode(value: Any) -> str:
    mode = str(value).strip().casefold()
    if mode == 'huang':
        return mode
    if mode.startswith('fixed:'):
        level = mode.split(':', 1)[1]
        if level.isdigit():
            return f"fixed:{int(level)}"
    raise ConfigError(f"Threshold mode must be 'huang' or 'fixed:<level>' with a non-negative integer level, not {value!r}!")


def resolve_config(layers: Mapping[str, Any],
                   require_input: bool = True) -> PipelineConfig:
    """Validate and normalize the settings in LAYERS into a PipelineConfig. Raises
    ConfigError describing the first problem found.
    """
    radius = _as_int('radius', layers['radius'])
    if radius < 0:
        raise ConfigError(f"The filter radius must be >= 0, not {radius}!")

    shape = str(layers['neighborhood_shape']).strip().casefold()
    if shape not in ('square', 'disc'):
        raise ConfigError(f"Neighborhood shape must be 'square' or 'disc', not {layers['neighborhood_shape']!r}!")

    connectivity = _as_int('connectivity', layers['connectivity'])
    if connectivity not in (4, 8):
        raise ConfigError(f"Connectivity must be 4 or 8, not {connectivity}!")

    order = str(layers['slice_order']).strip().casefold()
    if order not in ('acquisition', 'reversed'):
        raise ConfigError(f"Slice order must be 'acquisition' or 'reversed', not {layers['slice_order']!r}!")

    outputs = frozenset(s.casefold() for s in _as_list(layers['outputs']))
    if not outputs:
        raise ConfigError("At least one output artifact must be selected!")
    if outputs - known_artifacts:
        raise ConfigError(f"Unknown output artifact(s): {', '.join(sorted(outputs - known_artifacts))}. "
                          f"Known artifacts are {', '.join(sorted(known_artifacts))}.")

    jobs = _as_int('jobs', layers['jobs'])
    if jobs < 1:
        raise ConfigError(f"Need at least one worker, not {jobs}!")

    raw_input = layers['input']
    inputs = (str(raw_input),) if isinstance(raw_input, (str, Path)) else tuple(_as_list(raw_input))
    if require_input and not inputs:
        raise ConfigError("No input stack given!")

    spacing = layers.get('spacing')
    if spacing is not None:
        try:
            spacing = float(spacing)
        except (TypeError, ValueError):
            raise ConfigError(f"Slice spacing must be a number, not {spacing!r}!") from None

    return PipelineConfig(input=inputs, radius=radius, neighborhood_shape=shape, connectivity=connectivity,
                          slice_order=order, threshold_mode=normalize_threshold_mode(layers['threshold_mode']),
                          outputs=outputs, out_dir=Path(layers['out_dir']), jobs=jobs,
                          verbosity=_as_int('verbosity', layers['verbosity']), spacing=spacing)


def save_resolved(config: PipelineConfig,
                  path: Union[str, Path]) -> Path:
    """Write CONFIG, fully resolved, as JSON to PATH so that a run can be repeated
    from its output directory alone.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(image_io.jsonify(config.as_dict()), encoding='utf-8')
    return path


def load_resolved(path: Union[str, Path]) -> PipelineConfig:
    """Inverse of save_resolved()."""
    return resolve_config(ConfigLayers(config_file=path, search_dirs=[]))


if __name__ == "__main__":
    print("Sorry, no self-test code here!")
