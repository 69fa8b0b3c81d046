"""Random expression text and an independent evaluator working on the text itself."""

import math
import random
import re

UNARY = ("sin", "cos", "exp", "log", "sqrt", "abs", "tanh")
VARIADIC = ("min", "max")


class RefError(Exception):
    pass


def _number(rng):
    kind = rng.randrange(4)
    if kind == 0:
        return str(rng.randrange(0, 20))
    if kind == 1:
        return f"{rng.uniform(0, 10):.{rng.randrange(1, 6)}f}"
    if kind == 2:
        return f"{rng.uniform(1, 9):.3f}e{rng.choice(['', '-', '+'])}{rng.randrange(0, 4)}"
    return "." + str(rng.randrange(1, 999))


def random_text(rng: random.Random, depth: int = 0) -> str:
    sp = lambda: " " * rng.choice((0, 0, 1))  # noqa: E731
    if depth >= 4 or rng.random() < 0.25 + 0.1 * depth:
        return rng.choice((_number(rng), "s", "v", "w"))
    r = rng.random()
    if r < 0.45:
        op = rng.choice("+-*/^")
        txt = f"({random_text(rng, depth + 1)}){sp()}{op}{sp()}({random_text(rng, depth + 1)})"
    elif r < 0.55:
        txt = f"-({random_text(rng, depth + 1)})"
    elif r < 0.65:
        # unparenthesized chains exercise precedence and associativity
        ops = [rng.choice("+-*/") for _ in range(rng.randrange(1, 4))]
        parts = [random_text(rng, 4) for _ in range(len(ops) + 1)]
        txt = parts[0] + "".join(f"{sp()}{o}{sp()}{p}" for o, p in zip(ops, parts[1:]))
    elif r < 0.7:
        txt = f"{random_text(rng, 4)}^{random_text(rng, 4)}^{random_text(rng, 4)}"
    elif r < 0.9:
        txt = f"{rng.choice(UNARY)}({sp()}{random_text(rng, depth + 1)}{sp()})"
    else:
        k = rng.randrange(2, 4)
        txt = f"{rng.choice(VARIADIC)}(" + ",".join(random_text(rng, depth + 1) for _ in range(k)) + ")"
    return f"({txt})" if rng.random() < 0.2 else txt


_TOK = re.compile(r"\s*(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|[A-Za-z_]\w*|[-+*/^(),])")


class RefEvaluator:
    """Evaluates while parsing; shares no code with the package."""

    def __init__(self, text, s, v, w):
        self.toks = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            m = _TOK.match(text, pos)
            if not m:
                raise RefError("bad token")
            self.toks.append(m.group(1))
            pos = m.end()
        self.i = 0
        self.env = {"s": s, "v": v, "w": w}

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self):
        t = self.peek()
        self.i += 1
        return t

    def run(self):
        val = self.sum()
        if self.peek() is not None:
            raise RefError("trailing input")
        return val

    def sum(self):
        val = self.product()
        while self.peek() in ("+", "-"):
            op = self.take()
            rhs = self.product()
            val = val + rhs if op == "+" else val - rhs
        return val

    def product(self):
        val = self.signed()
        while self.peek() in ("*", "/"):
            op = self.take()
            rhs = self.signed()
            if op == "*":
                val = val * rhs
            else:
                if rhs == 0:
                    raise RefError("division by zero")
                val = val / rhs
        return val

    def signed(self):
        if self.peek() == "-":
            self.take()
            return -self.signed()
        base = self.primary()
        if self.peek() == "^":
            self.take()
            exp = self.signed()
            try:
                r = base**exp
            except ZeroDivisionError:
                raise RefError("0^negative") from None
            except OverflowError:
                return math.inf if base > 0 or float(exp).is_integer() and exp % 2 == 0 else -math.inf
            if isinstance(r, complex):
                raise RefError("complex power")
            return r
        return base

    def primary(self):
        t = self.take()
        if t is None:
            raise RefError("unexpected end")
        if t == "(":
            val = self.sum()
            if self.take() != ")":
                raise RefError("missing )")
            return val
        if t in self.env:
            return self.env[t]
        if t in UNARY or t in VARIADIC:
            if self.take() != "(":
                raise RefError("missing (")
            args = [self.sum()]
            while self.peek() == ",":
                self.take()
                args.append(self.sum())
            if self.take() != ")":
                raise RefError("missing )")
            if t in VARIADIC:
                return float(min(args) if t == "min" else max(args))
            x = args[0]
            if t == "log" and x <= 0 or t == "sqrt" and x < 0:
                raise RefError("domain")
            if t == "exp":
                try:
                    return math.exp(x)
                except OverflowError:
                    return math.inf
            try:
                return float({"sin": math.sin, "cos": math.cos, "log": math.log, "sqrt": math.sqrt,
                              "abs": abs, "tanh": math.tanh}[t](x))
            except ValueError:
                raise RefError("domain") from None
        return float(t)


def ref_eval(text, s, v, w):
    return RefEvaluator(text, s, v, w).run()


def same_float(a, b) -> bool:
    return (a == b and math.copysign(1, a) == math.copysign(1, b)) or (math.isnan(a) and math.isnan(b))
