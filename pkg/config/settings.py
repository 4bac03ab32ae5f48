# Configuration settings for the Westervelt decay lab

APP_CONFIG = {
    "prog": "westervelt-lab",
    "version": "0.4.0",
    "description": (
        "Spectral theory and decay experiments for the Westervelt equation "
        "written as a quasilinear first-order system"
    ),
    "log_env_var": "WESTERVELT_LOG",
    "default_log_level": "WARNING",
}

GRID_DEFAULTS = {
    "min_points_per_axis": 2,
    "max_analytic_modes": 10_000,
    # above this many unknowns the spectrum of A_h comes from shift-invert ARPACK
    "dense_eig_limit": 1_500,
}

SOLVER_DEFAULTS = {
    "lambda1_tol": 1e-10,
    "lambda1_max_iter": 10_000,
    "mu_tol": 1e-12,  # relative, scaled by 1 + |lambda|
    "resolvent_tol": 1e-10,
    "spectrum_tol": 1e-8,
    "resolvent_max_gain": 1e8,
    "double_root_rtol": 1e-14,
}

SCHEME_DEFAULTS = {
    "scheme": "semi_implicit_euler",
    "schemes": ["semi_implicit_euler", "imex_trapezoid"],
    "dt_cap": 1e-3,
    "dt_factor": 0.1,
    "t_end": 20.0,
    "record_every": 10,
    "margin_fraction": 0.9,
    "linear_solve_tol": 1e-10,
    "nonlinear": True,
}

NORM_DEFAULTS = {
    "p": 2.0,
    "p_min": 1.0,
    "p_max": 8.0,
    "kinds": ["W2_surrogate", "trace_surrogate", "Lp"],
}

FIT_DEFAULTS = {
    "window_fraction": 0.5,
    "method": "auto",
    "methods": ["auto", "raw_log", "peak_envelope"],
    "quantity": "combined",
    "quantities": ["combined", "u", "ut", "utt"],
    "min_samples": 10,
    "min_peaks": 3,
}

EXIT_CODES = {
    "success": 0,
    "config": 2,
    "numerical": 3,
    "parabolicity": 4,
}

TRAJECTORY_COLUMNS = ["t", "norm_u_W2", "norm_ut_trace", "max_abs_u", "min_coeff_a"]

SWEEP_COLUMNS = ["amplitude", "status", "omega_hat", "residual_rms", "violation_time"]

CONVERGENCE_COLUMNS = ["dt", "error", "observed_order"]

OUTPUT_FILES = {
    "spectrum": "spectrum.json",
    "resolvent": "resolvent.json",
    "trajectory": "trajectory.csv",
    "summary": "summary.json",
    "decay": "decay.json",
    "decay_fit": "decay_fit.csv",
    "sweep": "sweep.csv",
    "sweep_summary": "sweep_summary.json",
    "metadata": "run_metadata.json",
}

# Full default run configuration; a config file overrides any subset of it
DEFAULT_RUN_CONFIG = {
    "params": {"c": 1.0, "b": 1.0, "k": 1.0},
    "domain": {"kind": "interval", "lengths": [3.141592653589793]},
    "grid": {"n_per_axis": [99]},
    "initial": {
        "mode": 1,
        "nodal_file": None,
        "u0_amplitude": 1e-3,
        "u1_amplitude": 0.0,
    },
    "scheme": {
        "scheme": SCHEME_DEFAULTS["scheme"],
        "dt": None,  # None -> min(dt_cap, dt_factor / lambda0)
        "t_end": SCHEME_DEFAULTS["t_end"],
        "record_every": SCHEME_DEFAULTS["record_every"],
        "parabolicity_margin": None,  # None -> margin_fraction / (2k)
        "linear_solve_tol": SCHEME_DEFAULTS["linear_solve_tol"],
        "nonlinear": SCHEME_DEFAULTS["nonlinear"],
    },
    "norm": {"p": NORM_DEFAULTS["p"], "kind": "W2_surrogate"},
    "fit": {
        "window_fraction": FIT_DEFAULTS["window_fraction"],
        "method": FIT_DEFAULTS["method"],
        "quantity": FIT_DEFAULTS["quantity"],
    },
    "spectrum": {"n_modes": 10, "coefficient": "unit"},  # unit -> a = 1, initial -> a = 1/(1 - 2k u0)
    "resolvent": {"tol": SOLVER_DEFAULTS["resolvent_tol"]},
    "sweep": {"amplitudes": [1e-3, 1e-2, 1e-1, 0.3, 0.45, 0.6]},
    "output": {"dir": None},
    "seed": 12345,
}

PARAMETER_DESCRIPTIONS = {
    "config": {
        "help": "Path to a JSON run configuration",
        "details": "Any subset of the defaults may be given; missing keys fall back to the defaults",
    },
    "out": {
        "help": "Directory for report files",
        "details": "Without it the main report is printed to stdout",
    },
    "jobs": {
        "help": "Worker threads for amplitude sweeps",
        "details": "1 = sequential | n > 1 = rows evaluated concurrently, output order unchanged",
    },
    "lambda": {
        "help": "Spectral parameter for the resolvent check, given as re,im",
        "details": "Example: --lambda=-1,0.5",
    },
}
