import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv


load_dotenv()


LLM_URL_ENV = "LCA_LLM_URL"


@dataclass
class EndpointConfig:
    url: Optional[str] = None
    timeout: float = 30.0  # seconds
    retries: int = 3

    @property
    def enabled(self) -> bool:
        return bool(self.url)


def load_endpoint_config() -> EndpointConfig:
    url = os.getenv(LLM_URL_ENV, "").strip().rstrip("/") or None
    timeout_str = os.getenv("LCA_LLM_TIMEOUT", "30").strip()
    retries_str = os.getenv("LCA_LLM_RETRIES", "3").strip()
    try:
        timeout = float(timeout_str)
    except ValueError:
        timeout = 30.0
    try:
        retries = int(retries_str)
    except ValueError:
        retries = 3

    return EndpointConfig(
        url=url,
        timeout=timeout if timeout > 0 else 30.0,
        retries=max(retries, 1),
    )
