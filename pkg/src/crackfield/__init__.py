"""2D antiplane variational fracture toolkit.

Phase-field (AT2) fracture with alternating minimization, body and
boundary loads, dyadic blow-up rescaling with machine-exact scaling
identities, stress-intensity-factor extraction, Griffith stability
verdicts, competitor tests, and a quasi-static driver that certifies
irreversibility and energy balance.
"""

__version__ = "0.1.0"

from .energy import (EnergyLedger, LoadSpec, MaterialParams, elastic_energy,
                     griffith_ball_energy, load_potential, surface_energy,
                     total_phase_energy)
from .errors import (AnnulusEmpty, BoundaryPartitionInvalid, CenterOffLattice,
                     ConfigError, CrackfieldError, FloatingDomain, FormatError,
                     GridMismatch, NoConvergence, NotDisconnecting, NoTipFound,
                     ProgramEmpty, SlitOffLattice, SlitTouchesBoundary,
                     TipOffLattice, WindowTooCoarse)
from .evolution import (LoadProgram, Trajectory, detect_tips, import_snapshot,
                        quasistatic_run, stability_audit)
from .fields import (PhaseField, RescaledPair, ScalarField, blowup_rescale,
                     blowup_state, dilate, gradient, l2_distance_on_ball,
                     resample_to_coarser)
from .grid import (BallMask, Grid, SlitSpec, ball_mask, build_grid,
                   dilate_slit, slit_length_in_ball)
from .singular import energy_release_rate, mode_iii_displacement
from .solve import (SolverSettings, StaggeredResult, alternate_minimize,
                    solve_displacement, solve_phase)
from .stability import (BallBoundReport, BlowupDiagnostics, CompetitorFamily,
                        CompetitorResult, StabilityReport, blowup_diagnose,
                        check_ball_bound, check_load_scaling,
                        check_scaling_identity, competitor_test, extract_sif,
                        griffith_verdict)
