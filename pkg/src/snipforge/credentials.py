import os
from dataclasses import dataclass

from snipforge.constants import DEFAULT_TOKEN_ENV
from snipforge.errors import AuthMissing


@dataclass
class ResolvedToken:
    token: str | None = None

    source: str = ""

    def validate(self):
        if not self.token:
            raise AuthMissing(
                "API token required: export it in the environment variable named by discovery.token_env "
                f"(default {DEFAULT_TOKEN_ENV}). The token is never written to disk."
            )

    def __repr__(self) -> str:
        return f"ResolvedToken(token={'***' if self.token else None}, source={self.source!r})"


class TokenResolver:
    def resolve(self, context: dict) -> ResolvedToken | None: ...


class ConfiguredEnvResolver(TokenResolver):
    """Resolves the token from the environment variable named in the config."""

    def resolve(self, context: dict) -> ResolvedToken | None:
        env_name = context.get("token_env")
        environ = context.get("environ", os.environ)
        if env_name and environ.get(env_name):
            return ResolvedToken(token=environ[env_name], source=f"env:{env_name}")
        return


class DefaultEnvResolver(TokenResolver):
    """Resolves the token from the default environment variable."""

    def resolve(self, context: dict) -> ResolvedToken | None:
        environ = context.get("environ", os.environ)
        if environ.get(DEFAULT_TOKEN_ENV):
            return ResolvedToken(token=environ[DEFAULT_TOKEN_ENV], source=f"env:{DEFAULT_TOKEN_ENV}")
        return


class TokenChain:
    """Chain of token resolvers, returns first successful resolution."""

    def __init__(self, resolvers: list[TokenResolver]):
        self.resolvers = resolvers

    def resolve(self, context: dict) -> ResolvedToken:
        for resolver in self.resolvers:
            result = resolver.resolve(context)
            if result:
                return result

        return ResolvedToken(source="none")


def resolve_token(token_env: str | None = None, environ: dict | None = None) -> ResolvedToken:
    """
    Resolve the host API token following priority order:
    1. Environment variable named by the config (discovery.token_env)
    2. The default environment variable (GITHUB_TOKEN)
    3. Unresolved (callers decide whether that is an error)
    """
    context = {
        "token_env": token_env,
        "environ": os.environ if environ is None else environ,
    }

    chain = TokenChain(
        [
            ConfiguredEnvResolver(),
            DefaultEnvResolver(),
        ]
    )

    return chain.resolve(context)
