from .client import (
    AuditLog,
    ChatClient,
    EndpointConfig,
    HttpChatClient,
    MockChatClient,
    chat_vision,
    fingerprint,
    mock_client,
)
from .prompts import (
    PromptText,
    build_detection_prompt,
    build_elicitation_prompt,
    build_judge_prompt,
    build_pairwise_prompt,
)

__all__ = [
    "AuditLog",
    "ChatClient",
    "EndpointConfig",
    "HttpChatClient",
    "MockChatClient",
    "PromptText",
    "build_detection_prompt",
    "build_elicitation_prompt",
    "build_judge_prompt",
    "build_pairwise_prompt",
    "chat_vision",
    "fingerprint",
    "mock_client",
]
