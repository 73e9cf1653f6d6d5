import json
import os
from importlib import resources
from typing import Any, Optional, Union

from ..utils.logging import get_logger

logger = get_logger(__name__)  # pylint: disable=invalid-name

PathOrData = Union[str, os.PathLike, list, dict]


def packaged_config_path(name: str) -> str:
    """Path of a file shipped under `tracewarden/configs/`."""
    return str(resources.files("tracewarden").joinpath("configs", name))


class JsonFileMixin:
    """
    Load/save contract shared by the JSON configuration files (technique catalog, filter policy).

    Subclasses implement `_from_json` and `_to_json`; everything about file handling lives here.
    """

    default_file_name: Optional[str] = None

    @classmethod
    def load(cls, path_or_data: Optional[PathOrData] = None, **kwargs):
        if path_or_data is None:
            if cls.default_file_name is None:
                raise ValueError(f"{cls.__name__} has no packaged default; pass a path")
            path_or_data = packaged_config_path(cls.default_file_name)

        if isinstance(path_or_data, (list, dict)):
            data = path_or_data
        else:
            with open(path_or_data, "r", encoding="utf-8") as f:
                data = json.load(f)
            logger.debug(f"Loaded {cls.__name__} from {os.fspath(path_or_data)}")

        return cls._from_json(data, **kwargs)

    @classmethod
    def _from_json(cls, data: Any, **kwargs):
        raise NotImplementedError

    def save(self, path: Union[str, os.PathLike]) -> None:
        if os.path.isdir(path):
            logger.error(f"Provided path ({path}) should be a file, not a directory")
            return

        with open(path, "w", encoding="utf-8") as f:
            json.dump(self._to_json(), f, indent=2, ensure_ascii=False)
            f.write("\n")
        logger.info(f"{type(self).__name__} saved in {os.fspath(path)}")

    def _to_json(self) -> Any:
        raise NotImplementedError
