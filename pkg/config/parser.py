import ply.yacc as yacc

from config.lexer import lex_errors, lexer, tokens  # noqa: F401  (tokens lido pelo ply)


class ConfigSyntaxError(ValueError):
    """Lexical or syntax errors in a configuration file, with line numbers."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


syntax_errors = []


# =============================================================================
# GRAMÁTICA
# =============================================================================
def p_config(p):
    """config : lines"""
    p[0] = p[1]


def p_lines(p):
    """lines : lines line
    | empty"""
    if len(p) == 3:
        p[0] = p[1] + ([p[2]] if p[2] is not None else [])
    else:
        p[0] = []


def p_line(p):
    """line : entry NEWLINE
    | NEWLINE"""
    p[0] = p[1] if len(p) == 3 else None


def p_line_error(p):
    """line : error NEWLINE"""
    p[0] = None


def p_entry(p):
    """entry : NAME EQUALS value"""
    p[0] = {"key": p[1], "value": p[3], "lineno": p.lineno(1)}


def p_value(p):
    """value : NAME
    | NUMBER
    | endpoints"""
    p[0] = p[1]


def p_endpoints(p):
    """endpoints : endpoints COMMA HOSTPORT
    | HOSTPORT"""
    if len(p) == 4:
        p[0] = p[1] + [p[3]]
    else:
        p[0] = [p[1]]


def p_empty(p):
    """empty :"""
    pass


def p_error(p):
    if p:
        syntax_errors.append(f"unexpected {p.type} ({p.value!r}) on line {p.lineno}")
    else:
        syntax_errors.append("unexpected end of input")


# =============================================================================
# CONSTRUÇÃO DO PARSER
# =============================================================================
parser = yacc.yacc(write_tables=False, debug=False)


def parse_config_text(text):
    """Parse `key = value` lines into a list of {key, value, lineno} entries."""
    syntax_errors.clear()
    lex_errors.clear()
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    if not text.endswith("\n"):
        text += "\n"
    lexer.lineno = 1
    entries = parser.parse(text, lexer=lexer)
    errors = lex_errors + syntax_errors
    if errors:
        raise ConfigSyntaxError(errors)
    return entries or []


def parse_config_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())
