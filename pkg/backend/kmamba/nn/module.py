"""
Module system: parameter registration, traversal, train/eval mode and state dicts.
"""

from collections import OrderedDict
from collections.abc import Iterable, Iterator
from typing import Any, Optional, Union

import numpy as np

from kmamba.core.exceptions import CheckpointFormatError
from kmamba.engine.tensor import Tensor, get_default_dtype


class Parameter(Tensor):
    """A tensor marked as learnable."""

    def __init__(self, data: Any, name: Optional[str] = None, dtype: Any = None) -> None:
        if isinstance(data, Tensor):
            data = data.data
        super().__init__(data, requires_grad=True, dtype=dtype or get_default_dtype(), name=name)

    def __repr__(self) -> str:
        return f"Parameter(shape={self.shape}, dtype={self.dtype})"


class Module:
    """
    Base class for network components.

    Attributes assigned a ``Parameter`` or ``Module`` are registered
    automatically, in assignment order. Non-learnable state (batch-norm
    running statistics) goes through ``register_buffer``.
    """

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif name in self._parameters and value is None:
            del self._parameters[name]
        object.__setattr__(self, name, value)

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError(f"{type(self).__name__}.forward")

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value
        object.__setattr__(self, name, value)

    # =========================================================================
    # Traversal
    # =========================================================================

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield f"{prefix}{name}", param
        for name, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> Iterator[Parameter]:
        for _, param in self.named_parameters():
            yield param

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, buf in self._buffers.items():
            yield f"{prefix}{name}", buf
        for name, module in self._modules.items():
            yield from module.named_buffers(f"{prefix}{name}.")

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for name, module in self._modules.items():
            yield from module.named_modules(f"{prefix}{name}.")

    def children(self) -> Iterator["Module"]:
        yield from self._modules.values()

    # =========================================================================
    # Modes
    # =========================================================================

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            object.__setattr__(module, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def to_dtype(self, dtype: Union[str, np.dtype, type]) -> "Module":
        """Cast all parameters and buffers in place."""
        target = np.dtype(dtype)
        for param in self.parameters():
            param.data = param.data.astype(target)
            param.grad = None
        for _, module in self.named_modules():
            for name, buf in list(module._buffers.items()):
                module.register_buffer(name, buf.astype(target))
        return self

    # =========================================================================
    # Counting
    # =========================================================================

    def param_count(self) -> int:
        """Number of learnable scalars."""
        return sum(p.size for p in self.parameters())

    def param_ledger(self) -> list[tuple[str, tuple[int, ...], int]]:
        """(name, shape, count) for every parameter."""
        return [(name, p.shape, p.size) for name, p in self.named_parameters()]

    # =========================================================================
    # State
    # =========================================================================

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Copies of parameters and buffers (buffers prefixed with ``buffer:``)."""
        state: OrderedDict[str, np.ndarray] = OrderedDict()
        for name, param in self.named_parameters():
            state[name] = param.data.copy()
        for name, buf in self.named_buffers():
            state[f"buffer:{name}"] = np.array(buf, copy=True)
        return state

    def load_state_dict(self, state: dict[str, np.ndarray], source: str = "<state>") -> None:
        """
        Load values produced by ``state_dict``.

        Raises:
            CheckpointFormatError: Missing/unexpected names or shape mismatch
        """
        params = dict(self.named_parameters())
        expected = set(params) | {f"buffer:{n}" for n, _ in self.named_buffers()}
        missing = sorted(expected - set(state))
        unexpected = sorted(set(state) - expected)
        if missing or unexpected:
            raise CheckpointFormatError(
                source, f"missing={missing[:5]} unexpected={unexpected[:5]}"
            )
        for name, param in params.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise CheckpointFormatError(
                    source, f"{name}: shape {value.shape} != {param.shape}"
                )
            param.data = np.ascontiguousarray(value.astype(param.dtype))
        modules = dict(self.named_modules())
        for full_name, module_name, buf_name in self._buffer_paths():
            modules[module_name].register_buffer(buf_name, np.array(state[full_name], copy=True))

    def _buffer_paths(self) -> list[tuple[str, str, str]]:
        paths = []
        for module_name, module in self.named_modules():
            for buf_name in module._buffers:
                prefix = f"{module_name}." if module_name else ""
                paths.append((f"buffer:{prefix}{buf_name}", module_name, buf_name))
        return paths

    def extra_repr(self) -> str:
        return ""

    def __repr__(self) -> str:
        children = ", ".join(self._modules)
        extra = self.extra_repr()
        inner = ", ".join(part for part in (extra, children) if part)
        return f"{type(self).__name__}({inner})"


class ModuleList(Module):
    """Indexable list of submodules."""

    def __init__(self, modules: Optional[Iterable[Module]] = None) -> None:
        super().__init__()
        for module in modules or []:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._modules)), module)

    def __getitem__(self, index: int) -> Module:
        return list(self._modules.values())[index]

    def __len__(self) -> int:
        return len(self._modules)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._modules.values())


class Sequential(ModuleList):
    """Applies submodules in order."""

    def __init__(self, *modules: Module) -> None:
        super().__init__(modules)

    def forward(self, x: Tensor) -> Tensor:
        for module in self:
            x = module(x)
        return x
