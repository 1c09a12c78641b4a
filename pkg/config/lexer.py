import ply.lex as lex

from config.tokens import tokens  # noqa: F401  (lido pelo ply)

# -----------------------------------------------------------------------------
# ERROS LÉXICOS (reiniciados a cada análise)
# -----------------------------------------------------------------------------
lex_errors = []

# -----------------------------------------------------------------------------
# SÍMBOLOS
# -----------------------------------------------------------------------------
t_EQUALS = r"="
t_COMMA = r","

t_ignore = " \t\r"
t_ignore_COMMENT = r"\#.*"


# -----------------------------------------------------------------------------
# LITERAIS
# Atenção: ordem importa! host:port antes de NAME e NUMBER.
# -----------------------------------------------------------------------------
def t_HOSTPORT(t):
    r"[A-Za-z0-9_.\-]+:\d+"
    host, _, port = t.value.rpartition(":")
    t.value = (host, int(port))
    return t


def t_NAME(t):
    r"[A-Za-z_][A-Za-z0-9_.\-]*"
    return t


def t_NUMBER(t):
    r"\d+(\.\d+)?"
    t.value = float(t.value) if "." in t.value else int(t.value)
    return t


# -----------------------------------------------------------------------------
# CONTROLE
# -----------------------------------------------------------------------------
def t_NEWLINE(t):
    r"\n+"
    t.lexer.lineno += len(t.value)
    return t


def t_error(t):
    lex_errors.append(f"illegal character {t.value[0]!r} on line {t.lexer.lineno}")
    t.lexer.skip(1)


lexer = lex.lex()


def tokenize(text):
    """(type, value, lineno) for every token; used by the tests and --debug dumps."""
    lex_errors.clear()
    lexer.lineno = 1
    lexer.input(text)
    out = []
    while True:
        tok = lexer.token()
        if not tok:
            break
        out.append((tok.type, tok.value, tok.lineno))
    return out
