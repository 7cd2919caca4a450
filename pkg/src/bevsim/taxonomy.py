"""Object class taxonomy: foreground class names plus a background slot.

The default taxonomy has 8 foreground classes, giving 9 classes total
including background. ``DontCare`` is a reserved label name that never
maps to a class id.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError

DONT_CARE = "DontCare"

DEFAULT_CLASS_NAMES = ("Person", "Table", "Chair", "Shelf", "Box", "Robot", "Wall", "Misc")


@dataclass(frozen=True)
class Taxonomy:
    names: tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise DataError("class names must be unique")
        if DONT_CARE in names:
            raise DataError(f"{DONT_CARE!r} is reserved and cannot be a class")
        object.__setattr__(self, "names", names)

    @property
    def n_foreground(self) -> int:
        return len(self.names)

    @property
    def n_classes(self) -> int:
        """Foreground classes plus background."""
        return len(self.names) + 1

    @property
    def background_id(self) -> int:
        return len(self.names)

    def class_id(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown class name {name!r}; known: {list(self.names)}") from None

    def class_name(self, class_id: int) -> str:
        if not 0 <= class_id < len(self.names):
            raise DataError(f"class id {class_id} out of range [0, {len(self.names)})")
        return self.names[class_id]

    def __contains__(self, name: str) -> bool:
        return name in self.names


DEFAULT_TAXONOMY = Taxonomy()
