from .settings import settings, get_context_preset, resolve_context, CONTEXT_PRESETS

__all__ = ["settings", "get_context_preset", "resolve_context", "CONTEXT_PRESETS"]
