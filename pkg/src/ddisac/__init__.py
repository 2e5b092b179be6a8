"""Link-level simulation of joint channel/data estimation and delay-Doppler
radar parameter estimation over doubly-dispersive channels."""

from .channel import (
    ChannelPath,
    ChannelRealization,
    SystemConfig,
    build_td_channel,
    cp_phase_diag,
    cyclic_shift,
    doppler_diag,
    sample_paths,
)
from .errors import ConfigurationError, NumericalFailureError
from .jcde import (
    JcdeConfig,
    JcdeOutput,
    JcdeState,
    damp,
    denoise_channel_gaussian,
    denoise_qpsk,
    genie_linear_gabp,
    pilot_only_estimate,
    run_pbigabp,
)
from .montecarlo import (
    ExperimentPlan,
    JcdeSettings,
    MetricsRecord,
    RpeSettings,
    ber,
    nmse,
    run_jcde_sweep,
    run_rpe_sweep,
    run_sweep,
)
from .rpe import (
    BgParams,
    DelayDopplerDictionary,
    DelayDopplerGrid,
    RadarTarget,
    SparseChannelEstimate,
    bg_denoise,
    build_dictionary,
    default_grid,
    extract_targets,
    normalized_rmse,
    pda_em,
    restrict_to_pilot_block,
    sbl_em,
)
from .waveform import (
    Constellation,
    FrameLayout,
    PathOperator,
    WaveformSpec,
    afdm_tuning,
    block_pilot_layout,
    build_effective_channel,
    build_frame,
    build_path_operator,
    demodulate,
    modulate,
    single_pilot_layout,
    zadoff_chu,
)

__version__ = "0.1.0"
