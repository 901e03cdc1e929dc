"""Monte Carlo benchmarking, distribution fits and plots."""

from .fitting import FitSummary, burr12_pdf, fit_burr12, fit_weibull, histogram, weibull_pdf
from .harness import (
    ExperimentGrid,
    LossyGrid,
    LossyRecord,
    SweepResult,
    TrialRecord,
    average_unitaries,
    lossy_sweep,
    read_summary_csv,
    read_sweep_csv,
    run_cell,
    run_network,
    summarize,
    sweep,
    write_summary_csv,
    write_sweep_csv,
)
from .svgplot import plot_fidelity, plot_layout, write_plots
