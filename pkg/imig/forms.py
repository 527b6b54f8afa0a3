"""
imig - Case Configuration Forms
================================
WTForms definitions validating benchmark case configurations. Case files are
parsed from TOML, merged over the case defaults and fed to the form through
`data=`; every field error is collected before anything is built.
"""

from wtforms import Form, StringField, IntegerField, FloatField, FieldList
from wtforms.validators import NumberRange, AnyOf, ValidationError

from imig.config import Config

CASES = ('bar2d', 'eigenstrain', 'thermoelastic')


class CaseConfigForm(Form):
    """
    Validation of one case configuration.

    Optional knobs (rings, penalties, paths) are checked by the inline
    validators since they are legitimately absent.
    """
    max_depth = Config.MAX_DEPTH

    # ---------- Case ----------
    case = StringField('Case', validators=[AnyOf(CASES, message='Case must be one of %(values)s')])

    # ---------- Degrees ----------
    p_T = IntegerField('Temperature spline degree', validators=[NumberRange(min=1, max=2)])
    p_u = IntegerField('Displacement spline degree', validators=[NumberRange(min=1, max=2)])
    q = IntegerField('Foreground Lagrange degree', validators=[NumberRange(min=1, max=2)])

    # ---------- Mesh Sweep ----------
    h = FieldList(FloatField('Background element size'), min_entries=1)

    # ---------- Refinement ----------
    depth_T = IntegerField('Temperature refinement depth', validators=[NumberRange(min=0)])
    depth_u = IntegerField('Displacement refinement depth', validators=[NumberRange(min=0)])
    fg_depth = IntegerField('Foreground-only refinement depth', validators=[NumberRange(min=0)])
    ring_T = IntegerField('Temperature refinement ring')
    ring_u = IntegerField('Displacement refinement ring')

    # ---------- Nitsche Penalties ----------
    beta_T = FloatField('Temperature penalty')
    beta_u = FloatField('Displacement penalty')

    # ---------- Geometry / Output ----------
    angle = FloatField('Bar rotation angle (degrees)')
    output_dir = StringField('Output directory')
    lsf_file = StringField('Level set grid file')

    def validate_q(self, field):
        if None not in (field.data, self.p_T.data, self.p_u.data):
            if field.data < max(self.p_T.data, self.p_u.data):
                raise ValidationError('Foreground degree q must be at least max(p_T, p_u)')

    def validate_h(self, field):
        sizes = field.data
        if any(v is None for v in sizes):
            raise ValidationError('Every mesh size must be a number')
        if any(v <= 0 for v in sizes):
            raise ValidationError('Mesh sizes must be positive')
        if any(b >= a for a, b in zip(sizes, sizes[1:])):
            raise ValidationError('Mesh sizes must be strictly decreasing')

    def validate_depth_T(self, field):
        self._check_depth(field.data)

    def validate_depth_u(self, field):
        self._check_depth(field.data)

    def validate_fg_depth(self, field):
        depths = (self.depth_T.data, self.depth_u.data, field.data)
        if None not in depths and max(depths[:2]) + depths[2] + 1 > self.max_depth:
            raise ValidationError(f'Decomposition depth exceeds the maximum of {self.max_depth} levels')

    def validate_ring_T(self, field):
        self._check_ring(field)

    def validate_ring_u(self, field):
        self._check_ring(field)

    def validate_beta_T(self, field):
        self._check_penalty(field)

    def validate_beta_u(self, field):
        self._check_penalty(field)

    def validate_angle(self, field):
        if field.object_data is None:
            return
        if field.data is None or not -90.0 <= field.data <= 90.0:
            raise ValidationError('Bar rotation angle must lie in [-90, 90] degrees')

    def validate_lsf_file(self, field):
        if self.case.data != 'thermoelastic' and field.data:
            raise ValidationError('Only the thermoelastic case reads a level set grid file')

    # ---------- Helpers ----------

    def _check_depth(self, depth):
        if depth is not None and depth + 1 > self.max_depth:
            raise ValidationError(f'Depth must leave at most {self.max_depth} levels')

    @staticmethod
    def _check_ring(field):
        if field.object_data is not None and (field.data is None or field.data < 0):
            raise ValidationError('Refinement ring must be a non-negative integer')

    @staticmethod
    def _check_penalty(field):
        if field.object_data is not None and (field.data is None or field.data < 0):
            raise ValidationError('Penalty must be a non-negative number')

    def error_summary(self):
        """All field errors as one readable line."""
        parts = []
        for name, errors in self.errors.items():
            parts.append(f"{name}: {', '.join(_flatten(errors))}")
        return '; '.join(parts)


def _flatten(errors):
    for error in errors:
        if isinstance(error, (list, tuple)):
            yield from _flatten(error)
        else:
            yield str(error)
