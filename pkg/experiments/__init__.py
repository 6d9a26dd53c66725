"""Config-driven experiment runs: configs, run log, runner, VQE demo and CLI."""
