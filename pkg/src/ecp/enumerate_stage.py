"""Enumerate stage: multi-turn model + sandbox loop producing candidate-answer
enumerations for a task.

Each model-emitted program is executed in the sandbox; failures (nonzero
status or empty output) are fed back and the model retries, up to the coder
attempt budget. Only the final successful run's answers are kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .gateway import (Backend, BackendConfig, ChatMessage, GatewayError,
                      Transcript, ToolCall, last_fenced_block,
                      validate_transcript)
from .prompt_assets import load_prompt
from .sandbox import Sandbox, SandboxRequest
from .tasks import AnswerConstructionTask


class ProgramExtractionError(Exception):
    """Assistant message contains no runnable program."""


@dataclass(frozen=True)
class EnumerationConfig:
    coder_max_attempt: int = 3
    sandbox_timeout_s: float = 60.0
    max_answers: int = 100
    max_turns: int = 8


@dataclass
class EnumerationOutput:
    answers: list[str]
    attempts_used: int
    transcript: Transcript
    status: str  # ok | empty | exhausted
    error: str | None = None


def extract_program(message: ChatMessage) -> str:
    """Program payload of an assistant message: the tool call's arguments if
    present, else the last fenced code block."""
    if message.role != "assistant":
        raise ProgramExtractionError("not an assistant message")
    if message.tool_call is not None:
        return message.tool_call.arguments
    block = last_fenced_block(message.content)
    if block is None:
        raise ProgramExtractionError("no fenced code block in reply")
    return block


def dedup_preserving_order(items: list[str]) -> list[str]:
    seen: dict[str, None] = {}
    for item in items:
        seen.setdefault(item)
    return list(seen)


def _task_prompt(task: AnswerConstructionTask) -> str:
    return (f"Problem `{task.id}`:\n\n{task.informal_statement}\n\n"
            f"Formal statement:\n```lean\n{task.formal_statement}\n```\n")


def enumerate_answers(task: AnswerConstructionTask, backend: Backend,
                      sandbox: Sandbox, config: EnumerationConfig,
                      backend_config: BackendConfig) -> EnumerationOutput:
    """Run the enumeration loop for one task."""
    messages: list[ChatMessage] = [
        ChatMessage(role="system", content=load_prompt("enumerate_system")),
        ChatMessage(role="user", content=_task_prompt(task)),
    ]
    attempts = 0
    answers: list[str] = []
    status = "exhausted"
    last_ran_clean = False
    while attempts < config.coder_max_attempt:
        try:
            reply = backend.complete(messages, backend_config,
                                     tag=f"enumerate:{task.id}:{attempts}")
        except GatewayError as exc:
            transcript = Transcript(messages=tuple(messages), finished=False,
                                    finish_reason="error")
            return EnumerationOutput(answers=[], attempts_used=attempts,
                                     transcript=transcript, status="exhausted",
                                     error=str(exc))
        messages.append(reply)
        try:
            program = extract_program(reply)
        except ProgramExtractionError as exc:
            attempts += 1
            messages.append(ChatMessage(
                role="user",
                content=f"Could not find a program in your reply: {exc}. "
                        f"Reply with a single fenced Python code block."))
            continue
        result = sandbox.run(SandboxRequest(
            source=program, timeout_s=config.sandbox_timeout_s,
            max_answers=config.max_answers))
        attempts += 1
        response_text = (f"status: {result.status}\n"
                         f"answers ({len(result.answers)}"
                         f"{', truncated' if result.truncated else ''}):\n"
                         + "\n".join(result.answers))
        if result.stderr_excerpt:
            response_text += f"\nstderr:\n{result.stderr_excerpt}"
        if reply.tool_call is not None:
            messages.append(ChatMessage(role="tool", content=response_text,
                                        tool_call_id=reply.tool_call.call_id))
        else:
            messages.append(ChatMessage(role="user", content=response_text))
        last_ran_clean = result.status == "ok"
        if result.status == "ok" and result.answers:
            answers = dedup_preserving_order(list(result.answers))
            status = "ok"
            break
        messages.append(ChatMessage(
            role="user",
            content="The program failed or produced no answers. "
                    "Please revise it and try again."))
    if status != "ok":
        status = "empty" if last_ran_clean else "exhausted"
    transcript = Transcript(messages=tuple(messages), finished=True,
                            finish_reason="natural")
    validate_transcript(transcript.messages)
    return EnumerationOutput(answers=answers, attempts_used=attempts,
                             transcript=transcript, status=status)
