"""
Device-description documents: parsing, serialisation and the built-in
reference device.

Documents are YAML (schema in docs/DEVICE_FILE.md). Validation failures are
reported as StackParseError carrying the dotted field path and the 1-based
line number of the offending node.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import yaml
from pydantic import ValidationError

from app.core.exceptions import EmptyStack, StackParseError
from app.repositories.material_repo import MaterialRepository, get_material_repository
from app.schemas.stack_schemas import DeviceStack, Layer

SURFACE_BARRIER_FRACTION = 0.7


# ============================================================================
# YAML location helpers
# ============================================================================

def _node_at(node: Optional[yaml.Node], loc: Sequence[Any]) -> Optional[yaml.Node]:
    """Walk a composed YAML node tree along a pydantic error location."""
    for part in loc:
        if node is None:
            return None
        if isinstance(node, yaml.MappingNode):
            match = None
            for key_node, value_node in node.value:
                if key_node.value == str(part):
                    match = value_node
                    break
            if match is None:
                return node
            node = match
        elif isinstance(node, yaml.SequenceNode):
            if isinstance(part, int) and 0 <= part < len(node.value):
                node = node.value[part]
            else:
                return node
        else:
            return node
    return node


def _line_of(root: Optional[yaml.Node], loc: Sequence[Any]) -> Optional[int]:
    node = _node_at(root, loc)
    if node is None:
        return None
    return node.start_mark.line + 1


# ============================================================================
# Parse / serialise
# ============================================================================

def default_surface_barrier(cap_material: str, materials: MaterialRepository) -> float:
    return SURFACE_BARRIER_FRACTION * materials.lookup(cap_material).E_g


def parse_stack(document: str, materials: Optional[MaterialRepository] = None) -> DeviceStack:
    """
    Parse a device-description document into a validated DeviceStack.

    Args:
        document: YAML text
        materials: registry used to check material names (builtin if None)

    Returns:
        DeviceStack with layers in document order (surface first)

    Raises:
        StackParseError: schema violation, bad values or unknown materials
        EmptyStack: the layer list is empty
    """
    materials = materials or get_material_repository()

    try:
        root = yaml.compose(document)
        data = yaml.safe_load(document)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise StackParseError(
            f"Invalid YAML: {exc.problem or exc}",
            line=mark.line + 1 if mark else None,
        ) from exc

    if not isinstance(data, dict):
        raise StackParseError("Document must be a mapping with a 'layers' list", line=1)

    layers = data.get("layers")
    if layers is None:
        raise StackParseError("Missing required field", line=1, field="layers")
    if isinstance(layers, list) and not layers:
        raise EmptyStack(line=_line_of(root, ["layers"]))

    if "surface_barrier_eV" not in data and isinstance(layers, list):
        cap = layers[0].get("material") if isinstance(layers[0], dict) else None
        if isinstance(cap, str) and cap.strip() in materials:
            data = {**data, "surface_barrier_eV": default_surface_barrier(cap.strip(), materials)}

    try:
        stack = DeviceStack.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = first["loc"]
        field = ".".join(str(p) for p in loc) or None
        raise StackParseError(first["msg"], line=_line_of(root, loc), field=field) from exc

    for index, layer in enumerate(stack.layers):
        if layer.material not in materials:
            loc = ["layers", index, "material"]
            raise StackParseError(
                f"Unknown material '{layer.material}'",
                line=_line_of(root, loc),
                field=".".join(str(p) for p in loc),
            )

    return stack


def serialize_stack(stack: DeviceStack) -> str:
    """Write `stack` as the YAML document parse_stack reads."""
    data = stack.model_dump(by_alias=True, exclude_none=True)
    return yaml.safe_dump(data, sort_keys=False)


def load_stack(path: Union[str, Path], materials: Optional[MaterialRepository] = None) -> DeviceStack:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StackParseError(f"Cannot read device description {path}: {exc}") from exc
    return parse_stack(text, materials)


# ============================================================================
# Reference device
# ============================================================================

REFERENCE_DOCUMENT = "paper_stack.yaml"


def reference_document() -> str:
    """Text of the packaged reference-device document."""
    return resources.files("app.data").joinpath(REFERENCE_DOCUMENT).read_text(encoding="utf-8")


def paper_stack(
    ionized_fraction: float = 1.0,
    gate_bias: float = 0.0,
    materials: Optional[MaterialRepository] = None,
) -> DeviceStack:
    """
    The windowed-gate double-quantum-well device, cap first, as shipped in
    app/data/paper_stack.yaml.

    `ionized_fraction` sets the soak state of every doped layer: 0 before
    any 1.77 um illumination, 1 after a deep soak.
    """
    stack = parse_stack(reference_document(), materials)
    layers = [
        Layer.model_validate({**layer.model_dump(), "ionized_fraction": ionized_fraction})
        if layer.donor_doping > 0 else layer
        for layer in stack.layers
    ]
    return stack.with_updates(layers=layers, gate_bias=gate_bias)
