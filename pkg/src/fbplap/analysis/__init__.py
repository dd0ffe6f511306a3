"""Regularity diagnostics on solved states."""
from .blowup import (AcfTrace, BlowupState, HalfplaneFit, NotFreeBoundaryPoint, UnsupportedExponent, acf_phi,
                     blowup_rescale, halfplane_fit, linear_asymptotics_fit, regular_points)
from .freeboundary import FreeBoundary, NoFreeBoundary, extract_free_boundary, select_points, smoothed_normals
from .nta import nta_diagnostics
from .reports import ScanReport, bundle, dump_json
from .scans import (density_scan, lipschitz_sup, measure_scan, nondegeneracy_scan, replacement_scan,
                    subharmonic_check, viscosity_gradient_check)
