# =============================================================================
# TOKENS DA LINGUAGEM DE CONFIGURAÇÃO (chave = valor, uma por linha)
# =============================================================================

tokens = [
    "HOSTPORT",
    "NAME",
    "NUMBER",
    "EQUALS",
    "COMMA",
    "NEWLINE",
]

# Chaves reconhecidas e o campo de RunConfig que cada uma preenche.
KEYS = {
    "N": "n_dbs",
    "r": "r",
    "s": "s",
    "q": "q",
    "T": "T",
    "scheme": "scheme",
    "seed": "seed",
    "trainer": "trainer",
    "carrier": "carrier",
    "endpoints": "endpoints",
    "format": "output",
    "mixing": "mixing",
    "balanced_shares": "balanced_shares",
    "timeout": "timeout",
}
