"""
imig - Data Models
===================
Plain data models shared by the services and the command line:
- Material: thermal and elastic constants of one material (plane strain)
- CaseConfig: a validated benchmark case configuration

Case files are TOML. Anything a file leaves out is taken from the case
defaults below; the merged mapping is validated by imig.forms.CaseConfigForm.
"""

import copy
import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from imig.exceptions import ConfigError


# =====================================================
# MATERIAL MODEL
# =====================================================

@dataclass(frozen=True)
class Material:
    """
    Material constants.

    Elastic constants may be given either as (youngs_modulus, poisson_ratio)
    or as Lame constants (lame_lambda, lame_mu). Plane strain is assumed, so
    the 2D Lame constants are the 3D ones:
        lambda = E nu / ((1 + nu)(1 - 2 nu)),   mu = E / (2 (1 + nu))
    """
    name: str
    conductivity: float = 1.0
    youngs_modulus: float = None
    poisson_ratio: float = None
    lame_lambda: float = None
    lame_mu: float = None
    expansion: float = 0.0      # thermal expansion coefficient alpha
    eigenstrain: float = 0.0    # uniform isotropic inelastic strain

    def __post_init__(self):
        if not self.conductivity > 0:
            raise ConfigError(f"Material '{self.name}': conductivity must be positive")
        has_engineering = self.youngs_modulus is not None or self.poisson_ratio is not None
        has_lame = self.lame_lambda is not None or self.lame_mu is not None
        if has_engineering and has_lame:
            raise ConfigError(f"Material '{self.name}': give either E/nu or Lame constants, not both")
        if has_engineering and (self.youngs_modulus is None or self.poisson_ratio is None):
            raise ConfigError(f"Material '{self.name}': both youngs_modulus and poisson_ratio are required")
        if has_lame and (self.lame_lambda is None or self.lame_mu is None):
            raise ConfigError(f"Material '{self.name}': both lame_lambda and lame_mu are required")
        if self.is_elastic:
            lam, mu = self.lame
            if not mu > 0 or not lam + mu > 0:
                raise ConfigError(f"Material '{self.name}': requires mu > 0 and lambda + mu > 0")

    @property
    def is_elastic(self):
        return self.youngs_modulus is not None or self.lame_lambda is not None

    @property
    def lame(self):
        """(lambda, mu) for plane strain."""
        if self.lame_lambda is not None:
            return float(self.lame_lambda), float(self.lame_mu)
        if self.youngs_modulus is None:
            raise ConfigError(f"Material '{self.name}' has no elastic constants")
        E, nu = float(self.youngs_modulus), float(self.poisson_ratio)
        return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), E / (2.0 * (1.0 + nu))

    @property
    def youngs(self):
        """Young's modulus, derived from the Lame constants when not given."""
        if self.youngs_modulus is not None:
            return float(self.youngs_modulus)
        lam, mu = self.lame
        return mu * (3.0 * lam + 2.0 * mu) / (lam + mu)

    @classmethod
    def from_dict(cls, name, data):
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__ and k != 'name'}
        unknown = sorted(set(data) - set(known) - {'name'})
        if unknown:
            raise ConfigError(f"Material '{name}': unknown keys {unknown}")
        return cls(name=name, **known)


# =====================================================
# CASE DEFAULTS
# =====================================================

# Composite inclusions (x, y, radius) in mm on the 1.6 mm specimen
INCLUSION_DISCS = (
    (0.35, 0.40, 0.22),
    (1.05, 0.30, 0.18),
    (0.80, 0.85, 0.25),
    (0.30, 1.20, 0.20),
    (1.25, 1.15, 0.23),
    (1.35, 0.65, 0.12),
)

CASE_DEFAULTS = {
    'bar2d': {
        'p_T': 1, 'p_u': 1, 'q': 1,
        'h': [1.0, 0.5, 0.25, 0.125, 0.0625],
        'depth_T': 0, 'depth_u': 0, 'fg_depth': 0,
        'angle': 20.0,
        'materials': {
            'mat1': {'conductivity': 1.0},
            'mat2': {'conductivity': 0.1},
            'mat3': {'conductivity': 1.0},
        },
        'loads': {},
    },
    'eigenstrain': {
        'p_T': 1, 'p_u': 2, 'q': 2,
        'h': [0.625 * f for f in (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125)],
        'depth_T': 0, 'depth_u': 0, 'fg_depth': 0,
        'materials': {
            'inclusion': {'lame_lambda': 497.16, 'lame_mu': 390.63, 'eigenstrain': 0.1},
            'matrix': {'lame_lambda': 656.79, 'lame_mu': 338.35},
        },
        'loads': {},
    },
    'thermoelastic': {
        'p_T': 1, 'p_u': 2, 'q': 2,
        'h': [0.05],
        'depth_T': 2, 'depth_u': 2, 'fg_depth': 0,
        'ring_T': 1, 'ring_u': 2,
        'materials': {
            'alumina': {'youngs_modulus': 320e9, 'poisson_ratio': 0.23,
                        'conductivity': 25.0, 'expansion': 15e-6},
            'epoxy': {'youngs_modulus': 3.66e9, 'poisson_ratio': 0.358,
                      'conductivity': 0.14, 'expansion': 65e-6},
        },
        'loads': {
            'T_top': 0.0, 'T_bottom': 100.0, 'T0': 0.0,
            'u_top': [-0.01, -0.01], 'u_bottom': [0.0, 0.0],
        },
    },
}


@dataclass
class CaseConfig:
    """Validated configuration of one benchmark case."""
    case: str
    p_T: int = 1
    p_u: int = 2
    q: int = 2
    h: list = field(default_factory=list)
    depth_T: int = 0
    depth_u: int = 0
    fg_depth: int = 0
    ring_T: int = None
    ring_u: int = None
    beta_T: float = None
    beta_u: float = None
    output_dir: str = None
    lsf_file: str = None
    angle: float = 20.0
    materials: dict = field(default_factory=dict)
    loads: dict = field(default_factory=dict)

    def material_list(self):
        """Materials in file order; material ids are 1-based positions in this list."""
        return [Material.from_dict(name, data) for name, data in self.materials.items()]

    def penalty_T(self, factor):
        return self.beta_T if self.beta_T is not None else factor * self.q ** 2

    def penalty_u(self, factor):
        return self.beta_u if self.beta_u is not None else factor * self.q ** 2

    @classmethod
    def from_mapping(cls, data, base_dir=None, max_depth=None):
        """Merge a raw mapping over the case defaults and validate it."""
        from imig.forms import CaseConfigForm

        data = dict(data or {})
        case = data.get('case')
        if case not in CASE_DEFAULTS:
            raise ConfigError(f"Unknown case {case!r}; expected one of {sorted(CASE_DEFAULTS)}")
        merged = copy.deepcopy(CASE_DEFAULTS[case])
        for key, value in data.items():
            if key == 'materials':
                for name, props in value.items():
                    merged['materials'].setdefault(name, {}).update(props)
            elif key == 'loads':
                merged['loads'].update(value)
            else:
                merged[key] = value

        form = CaseConfigForm(data=merged)
        if max_depth is not None:
            form.max_depth = max_depth
        if not form.validate():
            raise ConfigError(f"Invalid {case} configuration: {form.error_summary()}")

        unknown = sorted(set(merged) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"Unknown configuration keys {unknown}")
        if merged.get('lsf_file') and base_dir and not os.path.isabs(merged['lsf_file']):
            merged['lsf_file'] = os.path.join(base_dir, merged['lsf_file'])
        merged['h'] = [float(v) for v in merged['h']]
        config = cls(**merged)
        config.material_list()
        return config

    @classmethod
    def from_toml(cls, path, max_depth=None):
        try:
            with open(path, 'rb') as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"Configuration file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"Cannot parse {path}: {exc}")
        return cls.from_mapping(data, base_dir=os.path.dirname(os.path.abspath(path)), max_depth=max_depth)

    @classmethod
    def default(cls, case):
        return cls.from_mapping({'case': case})
