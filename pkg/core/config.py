from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Exécution
    threads: int = 1
    log_level: str = "INFO"
    debug: bool = False

    # Garde-fous numériques
    blowup_threshold: float = 1e8

    model_config = SettingsConfigDict(
        env_prefix="PLOM_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    return Settings()


settings = get_settings()
