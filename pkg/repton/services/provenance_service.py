"""Self-describing metadata for every output file."""

import logging
from importlib import metadata
from typing import Dict

from repton import __version__
from repton.models.experiment import ExperimentConfig, config_hash

logger = logging.getLogger(__name__)

_TRACKED_PACKAGES = ("numpy", "scipy", "pydantic")


class ProvenanceService:
    """Config hashes, seeds and library versions for output headers."""

    def __init__(self):
        self._versions: Dict[str, str] = {}

    def versions(self) -> Dict[str, str]:
        """Versions of repton and the numerical stack (cached)."""
        if not self._versions:
            found = {"repton": __version__}
            for package in _TRACKED_PACKAGES:
                try:
                    found[package] = metadata.version(package)
                except metadata.PackageNotFoundError:
                    logger.warning(f"Could not determine the version of {package}")
                    found[package] = "unknown"
            self._versions = found
        return dict(self._versions)

    def experiment_id(self, config: ExperimentConfig) -> str:
        return f"{config.kind.value}-{config_hash(config)[:12]}"

    def header(self, config: ExperimentConfig) -> Dict[str, str]:
        """Metadata written as `# key: value` lines at the top of CSV files."""
        fields = {
            "experiment_id": self.experiment_id(config),
            "config_hash": config_hash(config),
            "seed": str(config.effective_seed),
        }
        fields.update({f"version_{name}": value for name, value in self.versions().items()})
        return fields


# Global service instance
provenance_service = ProvenanceService()
