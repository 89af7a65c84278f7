"""Named experiment configs shipped with the package."""

from importlib import resources

from ..exceptions import ConfigInvalid
from .config import parse_config, tomllib


def _dir():
    return resources.files(__package__) / "catalog"


def catalog_names():
    return sorted(p.name[:-5] for p in _dir().iterdir() if p.name.endswith(".toml"))


def catalog_config(name):
    """Parsed and validated config of catalog entry ``name``."""
    if name not in catalog_names():
        raise ConfigInvalid("catalog", f"no entry named {name!r}; try: {', '.join(catalog_names())}")
    path = _dir() / f"{name}.toml"
    return parse_config(tomllib.loads(path.read_text()), source=f"catalog:{name}")


def catalog_description(name):
    path = _dir() / f"{name}.toml"
    return tomllib.loads(path.read_text()).get("description", "")
