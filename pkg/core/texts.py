CLI_DESCRIPTION = """Manifold-aware generative sampling.

Learns the intrinsic coordinates of a dataset with diffusion maps, samples
new latent points from a kernel density estimate with a dissipative
Hamiltonian SDE, and lifts them back to the ambient space with geometric
harmonics."""

CLI_EPILOG = """exit codes:
  0  success
  1  runtime or numerical failure
  2  usage, validation or input error

environment:
  PLOM_THREADS, PLOM_LOG_LEVEL, PLOM_DEBUG, PLOM_BLOWUP_THRESHOLD (also read from .env)"""

COMMAND_HELP = {
    "hermite-gen": "generate a Hermite benchmark dataset and its JSON sidecar",
    "fit": "fit a model and print the fit summary as JSON",
    "sample": "draw realizations from a fitted model and write a diagnostics report",
    "spectrum": "write the diffusion eigenvalues as CSV (index, eigenvalue)",
    "residuals": "write parsimonious residuals as CSV (index, residual, selected)",
    "pca-spectrum": "write the PCA spectrum as CSV (index, eigenvalue, ratio, cumulative)",
    "extreme": "report the training sample farthest from the rest in latent space",
    "conditional": "write conditional expectations on an input grid from generated realizations",
    "schema": "print the JSON schema of an output document",
}

SELECT_HELP = "selection strategy: top_m=K or ratio=THETA"
CONFIG_HELP = "TOML experiment configuration (sections: scaling, pca, dmaps, selection, latent, gh, isde, classic, diagnostics)"
DEFAULTS_NOTE = (
    "ISDE defaults (f0=4, dr=0.25*s_hat, burn-in 200, stride 50), the diffusion kernel "
    "scale (15 x median squared distance), the residual basis (Markov eigenvectors) and the GH, "
    "selection and conditioning defaults are this tool's choices, not fitted values"
)
