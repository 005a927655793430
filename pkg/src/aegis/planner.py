"""Prompt parsing and decomposition into constrained subtasks.

Two front ends produce the same structured prompt: a small scene-description
DSL (recursive descent, precise error positions) and a freeform keyword
adapter that spots known nouns, colors and positional phrases.  Decomposition
turns a prompt into an ordered plan: one subtask per element, one for the
background when present, and a trailing layout subtask.

Grammar::

    scene STRING "{" ( element IDENT "{" (attr ";")* "}"
                     | background IDENT ("{" (attr ";")* "}")? )* "}"
    attr  ::= IDENT ":" value
    value ::= "#RRGGBB" | color word | NUMBER | anchor | "(" NUMBER "," NUMBER ")" | IDENT
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources


class PlannerError(Exception):
    pass


class PromptSyntaxError(PlannerError):
    def __init__(self, line: int, col: int, expected: str):
        super().__init__(f"line {line}, col {col}: expected {expected}")
        self.line, self.col, self.expected = line, col, expected


class UnknownKind(PlannerError):
    pass


class DuplicateElementName(PlannerError):
    pass


class BadAttributeValue(PlannerError):
    pass


class EmptyScene(PlannerError):
    pass


class NoRecognizedContent(PlannerError):
    pass


class UnknownSubtask(PlannerError):
    pass


class InvalidPayload(PlannerError):
    pass


# ---------------------------------------------------------------------------
# Lexicon


@dataclass(frozen=True)
class Lexicon:
    version: int
    anchors: dict[str, tuple[float, float]]
    colors: dict[str, tuple[int, int, int]]
    backgrounds: dict[str, dict]
    kinds: dict[str, dict]

    def kind_defaults(self, kind: str) -> dict:
        if kind not in self.kinds:
            raise UnknownKind(f"unknown kind {kind!r}")
        return self.kinds[kind]

    def glyph_shapes(self, kind: str) -> list[dict]:
        return self.kind_defaults(kind)["shapes"]


_LEXICON: Lexicon | None = None


def load_lexicon() -> Lexicon:
    """The lexicon shipped with the package (loaded once)."""
    global _LEXICON
    if _LEXICON is None:
        raw = json.loads(resources.files("aegis").joinpath("lexicon.json").read_text("utf-8"))
        _LEXICON = Lexicon(
            version=raw["version"],
            anchors={k: tuple(v) for k, v in raw["anchors"].items()},
            colors={k: tuple(v) for k, v in raw["colors"].items()},
            backgrounds=raw["backgrounds"],
            kinds=raw["kinds"],
        )
    return _LEXICON


# ---------------------------------------------------------------------------
# Prompt structure


@dataclass(frozen=True)
class ElementSpec:
    name: str
    kind: str
    color: tuple[int, int, int]
    size: float
    position: tuple[float, float]
    anchor: str | None = None  # set when position came from a named anchor

    def constraints(self) -> dict:
        return {
            "kind": self.kind,
            "color": list(self.color),
            "size": self.size,
            "position": list(self.position),
        }


@dataclass(frozen=True)
class BackgroundSpec:
    style: str
    top_color: tuple[int, int, int]
    bottom_color: tuple[int, int, int]

    def constraints(self) -> dict:
        return {
            "style": self.style,
            "top_color": list(self.top_color),
            "bottom_color": list(self.bottom_color),
        }


@dataclass(frozen=True)
class PromptSpec:
    title: str
    elements: tuple[ElementSpec, ...]
    background: BackgroundSpec | None
    source_text: str
    origin: str  # "dsl" | "freeform"

    def __post_init__(self):
        if not self.elements and self.background is None:
            raise EmptyScene("prompt must declare at least one element or a background")
        names = [e.name for e in self.elements]
        if len(names) != len(set(names)):
            raise DuplicateElementName(f"duplicate element names in {names}")


@dataclass(frozen=True)
class Subtask:
    id: str
    kind: str  # "element" | "background" | "layout"
    constraints: dict


@dataclass(frozen=True)
class Plan:
    subtasks: tuple[Subtask, ...]
    prompt: PromptSpec
    revision: int = 0

    def subtask(self, sid: str) -> Subtask:
        for st in self.subtasks:
            if st.id == sid:
                return st
        raise UnknownSubtask(sid)

    def renderable(self) -> tuple[Subtask, ...]:
        return tuple(st for st in self.subtasks if st.kind in ("element", "background"))


@dataclass(frozen=True)
class PlanEdit:
    op: str  # set_attribute | add_element | remove_element | reorder
    target: str | None = None
    payload: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# DSL tokenizer / parser


@dataclass
class _Token:
    kind: str  # ident | string | number | color | punct | eof
    value: str
    line: int
    col: int


_PUNCT = set("{}():;,")


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        start_line, start_col = line, col
        if c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                if text[j] == "\n":
                    raise PromptSyntaxError(start_line, start_col, "closing quote on same line")
                j += 1
            if j >= n:
                raise PromptSyntaxError(start_line, start_col, "closing quote")
            tokens.append(_Token("string", text[i + 1 : j], start_line, start_col))
            col += j - i + 1
            i = j + 1
            continue
        if c == "#":
            j = i + 1
            while j < n and (text[j].isalnum()):
                j += 1
            tokens.append(_Token("color", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if c in _PUNCT:
            tokens.append(_Token("punct", c, start_line, start_col))
            i += 1
            col += 1
            continue
        if c.isdigit() or (c in "+-." and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and (text[j].isdigit() or text[j] in ".eE+-"):
                if text[j] in "+-" and text[j - 1] not in "eE":
                    break
                j += 1
            tokens.append(_Token("number", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] in "_-"):
                j += 1
            tokens.append(_Token("ident", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        raise PromptSyntaxError(line, col, f"valid token (found {c!r})")
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str, lexicon: Lexicon):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.lex = lexicon
        self.text = text

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self, kind: str, value: str | None = None) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value if value is not None else kind
            raise PromptSyntaxError(tok.line, tok.col, f"{want!r}")
        self.pos += 1
        return tok

    def parse_scene(self) -> PromptSpec:
        self.take("ident", "scene")
        title = self.take("string").value
        self.take("punct", "{")
        elements: list[ElementSpec] = []
        background: BackgroundSpec | None = None
        names: set[str] = set()
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.value == "}":
                self.pos += 1
                break
            if tok.kind == "ident" and tok.value == "element":
                el = self.parse_element()
                if el.name in names:
                    raise DuplicateElementName(
                        f"line {tok.line}: element {el.name!r} declared twice"
                    )
                names.add(el.name)
                elements.append(el)
            elif tok.kind == "ident" and tok.value == "background":
                background = self.parse_background()
            else:
                raise PromptSyntaxError(tok.line, tok.col, "'element', 'background' or '}'")
        self.take("eof")
        if not elements and background is None:
            raise EmptyScene("scene declares no elements and no background")
        return PromptSpec(title, tuple(elements), background, self.text, "dsl")

    def parse_element(self) -> ElementSpec:
        self.take("ident", "element")
        name_tok = self.take("ident")
        name = name_tok.value
        attrs, positions = self.parse_attrs()
        kind = attrs.get("kind", name)
        if kind not in self.lex.kinds:
            line, col = positions.get("kind", (name_tok.line, name_tok.col))
            raise UnknownKind(f"line {line}, col {col}: unknown kind {kind!r}")
        return build_element(self.lex, name, kind, attrs)

    def parse_background(self) -> BackgroundSpec:
        self.take("ident", "background")
        style_tok = self.take("ident")
        style = style_tok.value
        if style not in self.lex.backgrounds:
            raise UnknownKind(
                f"line {style_tok.line}, col {style_tok.col}: unknown background {style!r}"
            )
        defaults = self.lex.backgrounds[style]
        top = tuple(defaults["top_color"])
        bottom = tuple(defaults["bottom_color"])
        if self.peek().kind == "punct" and self.peek().value == "{":
            attrs, _ = self.parse_attrs()
            if "top_color" in attrs:
                top = _parse_color(self.lex, attrs["top_color"])
            if "bottom_color" in attrs:
                bottom = _parse_color(self.lex, attrs["bottom_color"])
        elif self.peek().kind == "punct" and self.peek().value == ";":
            self.pos += 1  # bare "background sunset;" form
        return BackgroundSpec(style, top, bottom)

    def parse_attrs(self) -> tuple[dict, dict]:
        self.take("punct", "{")
        attrs: dict = {}
        positions: dict = {}
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.value == "}":
                self.pos += 1
                return attrs, positions
            key_tok = self.take("ident")
            self.take("punct", ":")
            value_tok = self.peek()
            attrs[key_tok.value] = self.parse_value()
            positions[key_tok.value] = (value_tok.line, value_tok.col)
            self.take("punct", ";")

    def parse_value(self):
        tok = self.peek()
        if tok.kind in ("color", "number", "ident", "string"):
            self.pos += 1
            return tok.value
        if tok.kind == "punct" and tok.value == "(":
            self.pos += 1
            x = self.take("number").value
            self.take("punct", ",")
            y = self.take("number").value
            self.take("punct", ")")
            return (x, y)
        raise PromptSyntaxError(tok.line, tok.col, "attribute value")


def _parse_color(lexicon: Lexicon, value) -> tuple[int, int, int]:
    if isinstance(value, str) and value.startswith("#"):
        hexpart = value[1:]
        if len(hexpart) != 6 or any(c not in "0123456789abcdefABCDEF" for c in hexpart):
            raise BadAttributeValue(f"bad color literal {value!r}")
        return tuple(int(hexpart[i : i + 2], 16) for i in (0, 2, 4))
    if isinstance(value, str) and value in lexicon.colors:
        return lexicon.colors[value]
    raise BadAttributeValue(f"bad color {value!r}")


def _parse_fraction(value, name: str, lo=0.0, hi=1.0) -> float:
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise BadAttributeValue(f"bad {name} {value!r}")
    if not (lo <= f <= hi):
        raise BadAttributeValue(f"{name} {f} outside [{lo}, {hi}]")
    return f


def build_element(lexicon: Lexicon, name: str, kind: str, attrs: dict) -> ElementSpec:
    """Materialize an ElementSpec, filling unspecified attrs from the lexicon."""
    defaults = lexicon.kind_defaults(kind)
    color = tuple(defaults["color"])
    size = float(defaults["size"])
    anchor: str | None = defaults["position"]
    position = lexicon.anchors[anchor]
    for key, value in attrs.items():
        if key == "kind":
            continue
        elif key == "color":
            color = _parse_color(lexicon, value)
        elif key == "size":
            size = _parse_fraction(value, "size")
            if size <= 0:
                raise BadAttributeValue("size must be positive")
        elif key == "position":
            if isinstance(value, tuple):
                position = (
                    _parse_fraction(value[0], "position x"),
                    _parse_fraction(value[1], "position y"),
                )
                anchor = None
            elif isinstance(value, str) and value in lexicon.anchors:
                anchor = value
                position = lexicon.anchors[value]
            else:
                raise BadAttributeValue(f"bad position {value!r}")
        else:
            raise BadAttributeValue(f"unknown attribute {key!r}")
    return ElementSpec(name, kind, color, size, tuple(position), anchor)


def parse_prompt(text: str, lexicon: Lexicon | None = None) -> PromptSpec:
    """Parse DSL text into a fully populated PromptSpec."""
    return _Parser(text, lexicon or load_lexicon()).parse_scene()


# ---------------------------------------------------------------------------
# Freeform adapter

_ABOVE_WORDS = {"above", "over", "atop"}
_BELOW_WORDS = {"below", "under", "beneath"}


def interpret_freeform(text: str, lexicon: Lexicon | None = None) -> PromptSpec:
    """Keyword-spotting adapter: nouns, adjacent color words, above/below cues."""
    lex = lexicon or load_lexicon()
    if not text.strip():
        raise NoRecognizedContent("empty prompt")
    tokens = [t for t in "".join(c if c.isalnum() else " " for c in text.lower()).split() if t]

    elements: list[dict] = []
    background: str | None = None
    pending_color: tuple[int, int, int] | None = None
    pending_anchor: str | None = None
    for tok in tokens:
        if tok in lex.backgrounds:
            if background is None:
                background = tok
        elif tok in lex.kinds:
            elements.append(
                {"kind": tok, "color": pending_color, "anchor": pending_anchor}
            )
            pending_color = None
            pending_anchor = None
        elif tok in lex.colors:
            pending_color = lex.colors[tok]
        elif tok in _ABOVE_WORDS:
            if elements:
                elements[-1]["anchor"] = "upper-center"
            pending_anchor = "lower-center"
        elif tok in _BELOW_WORDS:
            if elements:
                elements[-1]["anchor"] = "lower-center"
            pending_anchor = "upper-center"
    if not elements and background is None:
        raise NoRecognizedContent(f"no lexicon words found in {text!r}")

    used: dict[str, int] = {}
    specs: list[ElementSpec] = []
    for el in elements:
        base = el["kind"]
        used[base] = used.get(base, 0) + 1
        name = base if used[base] == 1 else f"{base}-{used[base]}"
        attrs: dict = {}
        if el["anchor"] is not None:
            attrs["position"] = el["anchor"]
        spec = build_element(lex, name, el["kind"], attrs)
        if el["color"] is not None:
            spec = replace(spec, color=tuple(el["color"]))
        specs.append(spec)

    bg = None
    if background is not None:
        info = lex.backgrounds[background]
        bg = BackgroundSpec(background, tuple(info["top_color"]), tuple(info["bottom_color"]))
    title = " ".join(tokens[:6])
    return PromptSpec(title, tuple(specs), bg, text, "freeform")


def parse_any(text: str, lexicon: Lexicon | None = None) -> PromptSpec:
    """DSL when the text opens with 'scene', otherwise the freeform adapter."""
    if text.lstrip().startswith("scene"):
        return parse_prompt(text, lexicon)
    return interpret_freeform(text, lexicon)


# ---------------------------------------------------------------------------
# Decomposition and plan edits


def decompose(prompt: PromptSpec) -> Plan:
    """One element subtask per element, background subtask when present,
    trailing layout subtask; ids are "st-<ordinal>-<name>"."""
    subtasks: list[Subtask] = []
    ordinal = 0
    for el in prompt.elements:
        subtasks.append(Subtask(f"st-{ordinal}-{el.name}", "element", el.constraints()))
        ordinal += 1
    if prompt.background is not None:
        subtasks.append(
            Subtask(f"st-{ordinal}-background", "background", prompt.background.constraints())
        )
        ordinal += 1
    subtasks.append(Subtask(f"st-{ordinal}-layout", "layout", {"order": [s.id for s in subtasks]}))
    return Plan(tuple(subtasks), prompt, revision=0)


def _next_ordinal(plan: Plan) -> int:
    return max(int(st.id.split("-")[1]) for st in plan.subtasks) + 1


def _layout_refreshed(subtasks: list[Subtask]) -> list[Subtask]:
    """Move layout last and refresh its recorded order."""
    layout = [st for st in subtasks if st.kind == "layout"]
    rest = [st for st in subtasks if st.kind != "layout"]
    new_layout = Subtask(layout[0].id, "layout", {"order": [s.id for s in rest]})
    return rest + [new_layout]


def edit_plan(plan: Plan, edit: PlanEdit, lexicon: Lexicon | None = None) -> Plan:
    """Apply one edit, returning a new Plan with revision + 1."""
    lex = lexicon or load_lexicon()
    subtasks = list(plan.subtasks)

    if edit.op == "set_attribute":
        target = plan.subtask(edit.target)  # raises UnknownSubtask
        if target.kind == "layout":
            raise InvalidPayload("layout subtask has no editable attributes")
        constraints = dict(target.constraints)
        for key, value in edit.payload.items():
            if target.kind == "element":
                if key == "color":
                    constraints["color"] = list(_parse_color(lex, value))
                elif key == "size":
                    size = _parse_fraction(value, "size")
                    if size <= 0:
                        raise InvalidPayload("size must be positive")
                    constraints["size"] = size
                elif key == "position":
                    if isinstance(value, str) and value in lex.anchors:
                        constraints["position"] = list(lex.anchors[value])
                    elif isinstance(value, (list, tuple)) and len(value) == 2:
                        constraints["position"] = [
                            _parse_fraction(value[0], "position x"),
                            _parse_fraction(value[1], "position y"),
                        ]
                    else:
                        raise InvalidPayload(f"bad position {value!r}")
                else:
                    raise InvalidPayload(f"unknown element attribute {key!r}")
            else:  # background
                if key in ("top_color", "bottom_color"):
                    constraints[key] = list(_parse_color(lex, value))
                elif key == "style":
                    if value not in lex.backgrounds:
                        raise InvalidPayload(f"unknown background style {value!r}")
                    info = lex.backgrounds[value]
                    constraints = {
                        "style": value,
                        "top_color": list(info["top_color"]),
                        "bottom_color": list(info["bottom_color"]),
                    }
                else:
                    raise InvalidPayload(f"unknown background attribute {key!r}")
        subtasks = [
            Subtask(st.id, st.kind, constraints) if st.id == edit.target else st
            for st in subtasks
        ]

    elif edit.op == "add_element":
        payload = dict(edit.payload)
        name = payload.pop("name", None)
        kind = payload.pop("kind", None)
        if not name or not kind:
            raise InvalidPayload("add_element needs 'name' and 'kind'")
        existing = {st.id.split("-", 2)[2] for st in subtasks if st.kind == "element"}
        if name in existing:
            raise DuplicateElementName(name)
        spec = build_element(lex, name, kind, payload)
        new_st = Subtask(f"st-{_next_ordinal(plan)}-{name}", "element", spec.constraints())
        last_el = max(
            (i for i, st in enumerate(subtasks) if st.kind == "element"), default=-1
        )
        subtasks.insert(last_el + 1, new_st)

    elif edit.op == "remove_element":
        target = plan.subtask(edit.target)
        if target.kind != "element":
            raise InvalidPayload("remove_element only removes element subtasks")
        subtasks = [st for st in subtasks if st.id != edit.target]

    elif edit.op == "reorder":
        order = edit.payload.get("order")
        element_ids = [st.id for st in subtasks if st.kind == "element"]
        if not isinstance(order, list) or sorted(order) != sorted(element_ids):
            raise InvalidPayload("reorder payload must be a permutation of element subtask ids")
        by_id = {st.id: st for st in subtasks}
        rest = [st for st in subtasks if st.kind not in ("element", "layout")]
        layout = [st for st in subtasks if st.kind == "layout"]
        subtasks = [by_id[i] for i in order] + rest + layout

    else:
        raise InvalidPayload(f"unknown edit op {edit.op!r}")

    return Plan(tuple(_layout_refreshed(subtasks)), plan.prompt, plan.revision + 1)


# ---------------------------------------------------------------------------
# Pretty printer (normalized DSL)


def _fmt_color(c) -> str:
    return "#%02X%02X%02X" % tuple(c)


def _fmt_num(x: float) -> str:
    return repr(float(x))


def render_prompt(prompt: PromptSpec) -> str:
    """Normalized DSL text; parse_prompt(render_prompt(p)) reproduces p."""
    lines = [f'scene "{prompt.title}" {{']
    for el in prompt.elements:
        lines.append(f"  element {el.name} {{")
        lines.append(f"    kind: {el.kind};")
        lines.append(f"    color: {_fmt_color(el.color)};")
        lines.append(f"    size: {_fmt_num(el.size)};")
        if el.anchor is not None:
            lines.append(f"    position: {el.anchor};")
        else:
            lines.append(
                f"    position: ({_fmt_num(el.position[0])}, {_fmt_num(el.position[1])});"
            )
        lines.append("  }")
    if prompt.background is not None:
        bg = prompt.background
        lines.append(f"  background {bg.style} {{")
        lines.append(f"    top_color: {_fmt_color(bg.top_color)};")
        lines.append(f"    bottom_color: {_fmt_color(bg.bottom_color)};")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
