"""Phase-quantized constant-envelope precoding with per-AP power control
for cell-free massive MIMO-OFDM downlinks."""

__version__ = "0.1.0"

from .errors import (ConfigError, DimensionMismatch, EmptyInput, FactorizationFailure,
                     LengthMismatch, MissingManifest, NonSquareAPCount)
from .kernels import BACKEND
from .scenario import (SetupGeometry, SolverParams, SystemConfig, build_geometry, derive_gamma,
                       derive_noise_power, load_config, full_scale_config, rng_stream)
from .channel import (ChannelRealization, CorrelationSet, LargeScale, PowerDelayProfile,
                      frequency_response, generate_pdp, generate_taps, large_scale_fading,
                      spatial_correlation)
from .waveform import CEAlphabet, SymbolGrid, build_symbol_grid, demap_qpsk, dft, idft, qpsk_map, quantize_ce
from .precoder import RelaxedPrecoder, classical_precode, prox_sq_inf, relaxed_objective, solve_relaxed
from .power_control import (PowerState, PrecodeResult, alternating_precode, ap_contribution,
                            distortion, effective_channel, update_beta, update_rho_l)
from .link_eval import (BerReport, SortedBerCurve, aggregate_sorted, evaluate_setup,
                        evaluate_setup_all, simulate_downlink)
