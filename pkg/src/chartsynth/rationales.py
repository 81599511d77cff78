"""The step-by-step rationale language emitted by the data generator.

A rationale is a flat program: each line binds `ans` or `ans_<k>` to either
an atomic sub-question (`ans_0 = VQA("What is the value of 2002?")`) or a
tool call over earlier bindings and number literals
(`ans = avg(ans_0, ans_1)`). Exactly one step binds `ans`, and it comes
last. There is no control flow.

`parse_rationale` accepts messy but unambiguous input (odd spacing,
";"-separated steps, any op-name casing); `print_rationale` emits the
canonical form, and the two compose to the identity on valid programs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

TOOL_OPS: dict[str, tuple[int, int | None]] = {
    "sum": (1, None),
    "diff": (2, 2),
    "avg": (1, None),
    "min": (1, None),
    "max": (1, None),
    "count": (1, None),
    "ratio": (2, 2),
    "times": (2, 2),
    "compare_greater": (2, 2),
    "compare_less": (2, 2),
}

FINAL_BINDING = "ans"

_BINDING_RE = re.compile(r"^ans(_(0|[1-9]\d*))?$")
_NUMBER_RE = re.compile(r"^-?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_STEP_RE = re.compile(r"^([A-Za-z_][A-Za-z_0-9]*)\s*=\s*([A-Za-z_][A-Za-z_0-9]*)\s*\((.*)\)$")


class RationaleError(ValueError):
    """Base class for rationale parsing and validation failures."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RationaleSyntaxError(RationaleError):
    pass


class UnknownOpError(RationaleError):
    pass


class BadBindingError(RationaleError):
    """Binding name outside the ans/ans_<k> family."""


class DuplicateBindingError(RationaleError):
    pass


class UndefinedBindingError(RationaleError):
    pass


class MissingAnswerError(RationaleError):
    """No step binds "ans", or "ans" is not the last step."""


@dataclass(frozen=True)
class VqaCall:
    question: str


@dataclass(frozen=True)
class ToolCall:
    op: str
    args: tuple[Union[str, float], ...]  # binding names or number literals


@dataclass(frozen=True)
class RationaleStep:
    target: str
    call: Union[VqaCall, ToolCall]


@dataclass(frozen=True)
class RationaleProgram:
    steps: tuple[RationaleStep, ...]

    def __post_init__(self):
        _validate(self.steps)


def _validate(steps: tuple[RationaleStep, ...]) -> None:
    if not steps:
        raise RationaleError("program has no steps")
    bound: set[str] = set()
    for i, step in enumerate(steps):
        if not _BINDING_RE.match(step.target):
            raise BadBindingError(f"binding {step.target!r} must be 'ans' or 'ans_<k>'")
        if step.target in bound:
            raise DuplicateBindingError(f"binding {step.target!r} defined twice")
        if step.target == FINAL_BINDING and i != len(steps) - 1:
            raise MissingAnswerError("'ans' must be the final step")
        if isinstance(step.call, VqaCall):
            if not step.call.question:
                raise RationaleError(f"step {step.target!r}: empty VQA question")
            if any(ch in _LINE_BREAKS for ch in step.call.question):
                raise RationaleError(f"step {step.target!r}: question must be single-line")
        else:
            call = step.call
            if call.op not in TOOL_OPS:
                raise UnknownOpError(f"unknown op {call.op!r}")
            lo, hi = TOOL_OPS[call.op]
            if len(call.args) < lo or (hi is not None and len(call.args) > hi):
                raise RationaleError(
                    f"op {call.op!r} expects {lo if hi == lo else f'at least {lo}'} args,"
                    f" got {len(call.args)}"
                )
            for arg in call.args:
                if isinstance(arg, str) and arg not in bound:
                    raise UndefinedBindingError(f"binding {arg!r} used before definition")
        bound.add(step.target)
    if steps[-1].target != FINAL_BINDING:
        raise MissingAnswerError("program must end with an 'ans' step")


_LINE_BREAKS = "\n\r\x0b\x0c\x1c\x1d\x1e\x85  "


def _split_steps(source: str):
    """Yield (line number, step text); steps split on newlines and ';'.

    ';' inside a quoted question does not split.
    """
    for lineno, line in enumerate(source.splitlines(), start=1):
        pieces = []
        buf: list[str] = []
        in_string = escaped = False
        for ch in line:
            if in_string:
                buf.append(ch)
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == ";":
                pieces.append("".join(buf))
                buf = []
            else:
                buf.append(ch)
                if ch == '"':
                    in_string = True
        pieces.append("".join(buf))
        for piece in pieces:
            piece = piece.strip()
            if piece and not piece.startswith("#"):
                yield lineno, piece


def _parse_string(text: str, lineno: int) -> tuple[str, str]:
    """Parse a double-quoted literal with \\" and \\\\ escapes; return (value, rest)."""
    out = []
    i = 1
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text) and text[i + 1] in ('"', "\\"):
            out.append(text[i + 1])
            i += 2
        elif ch == '"':
            return "".join(out), text[i + 1 :].lstrip()
        else:
            out.append(ch)
            i += 1
    raise RationaleSyntaxError("unterminated string literal", lineno)


def parse_rationale(source: str) -> RationaleProgram:
    """Parse rationale text into a validated program."""
    steps: list[RationaleStep] = []
    bound: set[str] = set()
    for lineno, text in _split_steps(source):
        m = _STEP_RE.match(text)
        if not m:
            raise RationaleSyntaxError(f"expected 'target = op(...)', got {text!r}", lineno)
        target, op, argtext = m.groups()
        argtext = argtext.strip()
        if op.lower() == "vqa":
            if not argtext.startswith('"'):
                raise RationaleSyntaxError("VQA expects one quoted question", lineno)
            question, rest = _parse_string(argtext, lineno)
            if rest:
                raise RationaleSyntaxError(f"unexpected text after question: {rest!r}", lineno)
            if not question:
                raise RationaleError("empty VQA question", lineno)
            if any(ch in _LINE_BREAKS for ch in question):
                raise RationaleError("question must be single-line", lineno)
            call: Union[VqaCall, ToolCall] = VqaCall(question=question)
        else:
            if op.lower() not in TOOL_OPS:
                raise UnknownOpError(f"unknown op {op!r}", lineno)
            args: list[Union[str, float]] = []
            if argtext:
                for token in argtext.split(","):
                    token = token.strip()
                    if not token:
                        raise RationaleSyntaxError("empty argument", lineno)
                    if _NUMBER_RE.match(token):
                        args.append(float(token))
                    elif re.match(r"^[A-Za-z_][A-Za-z_0-9]*$", token):
                        args.append(token)
                    else:
                        raise RationaleSyntaxError(f"bad argument {token!r}", lineno)
            call = ToolCall(op=op.lower(), args=tuple(args))

        if not _BINDING_RE.match(target):
            raise BadBindingError(f"binding {target!r} must be 'ans' or 'ans_<k>'", lineno)
        if target in bound:
            raise DuplicateBindingError(f"binding {target!r} defined twice", lineno)
        if FINAL_BINDING in bound:
            raise MissingAnswerError("'ans' must be the final step", lineno)
        if isinstance(call, ToolCall):
            lo, hi = TOOL_OPS[call.op]
            if len(call.args) < lo or (hi is not None and len(call.args) > hi):
                raise RationaleError(
                    f"op {call.op!r} expects {lo if hi == lo else f'at least {lo}'} args,"
                    f" got {len(call.args)}",
                    lineno,
                )
            for arg in call.args:
                if isinstance(arg, str) and arg not in bound:
                    raise UndefinedBindingError(f"binding {arg!r} used before definition", lineno)
        bound.add(target)
        steps.append(RationaleStep(target=target, call=call))
    if not steps:
        raise RationaleError("program has no steps")
    if steps[-1].target != FINAL_BINDING:
        raise MissingAnswerError("program must end with an 'ans' step")
    return RationaleProgram(steps=tuple(steps))


def _format_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def print_rationale(program: RationaleProgram) -> str:
    """Canonical text: one step per line, lowercase ops, ", " between args."""
    lines = []
    for step in program.steps:
        if isinstance(step.call, VqaCall):
            question = step.call.question.replace("\\", "\\\\").replace('"', '\\"')
            lines.append(f'{step.target} = VQA("{question}")')
        else:
            args = ", ".join(
                arg if isinstance(arg, str) else _format_number(arg) for arg in step.call.args
            )
            lines.append(f"{step.target} = {step.call.op}({args})")
    return "\n".join(lines)
