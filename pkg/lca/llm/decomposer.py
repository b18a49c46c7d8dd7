from __future__ import annotations

import asyncio
import json
import logging
import re
from typing import List, Literal, Optional

from langchain_core.exceptions import OutputParserException
from langchain_core.output_parsers import BaseOutputParser
from langchain_core.prompts import PromptTemplate
from langchain_core.runnables import RunnableLambda

from lca.config import EndpointConfig
from lca.llm.client import CompletionClient
from lca.llm.schemas import DEFAULT_PROMPT, Curriculum, DecompositionPrompt
from lca.semantics.captions import Caption, GrammarError, Grasping, OnTop, parse_caption
from lca.world.types import Grasp, ObjectId, PairStack, Task, TripleStack


logger = logging.getLogger(__name__)

CurriculumSource = Literal["rule", "external"]

TASK_FORMS = (
    "Grasp the {color} object",
    "Stack the {color} object on top of the {color} object",
    "Stack all three objects",
)

_COLOR = r"(red|green|blue)"
_GRASP_RE = re.compile(rf"^grasp (?:the )?{_COLOR}(?: object)?$")
_PAIR_RE = re.compile(rf"^stack (?:the )?{_COLOR}(?: object)? on (?:top of )?(?:the )?{_COLOR}(?: object)?$")
_TRIPLE_RE = re.compile(r"^stack all (?:three|3) objects$")
_THEN_RE = re.compile(r"\s*,?\s*(?:\band\s+)?\bthen\s+")


def _normalize(text: str) -> str:
    return " ".join(text.lower().split()).rstrip(".").strip()


def parse_task(text: str) -> Task:
    cleaned = _normalize(text)
    if _TRIPLE_RE.match(cleaned):
        return TripleStack()
    match = _GRASP_RE.match(cleaned)
    if match:
        return Grasp(ObjectId.from_color(match.group(1)))
    match = _PAIR_RE.match(cleaned)
    if match:
        top, bottom = (ObjectId.from_color(c) for c in match.groups())
        if top is bottom:
            raise GrammarError(f"a stacking task needs two different colors: {text!r}")
        return PairStack(top, bottom)
    raise GrammarError(f"unrecognized task {text!r}; expected one of {list(TASK_FORMS)}")


def parse_instruction(text: str) -> List[Task]:
    """Parse a possibly composite instruction ("... and then ...") into tasks."""
    clauses = [c for c in _THEN_RE.split(_normalize(text)) if c]
    if not clauses:
        raise GrammarError(f"empty instruction; expected one of {list(TASK_FORMS)}")
    tasks = []
    for clause in clauses:
        if not clause.startswith(("stack", "grasp")):
            clause = f"stack {clause}"
        tasks.append(parse_task(clause))
    return tasks


def decompose(task: Task) -> Curriculum:
    if isinstance(task, Grasp):
        return Curriculum((Grasping(task.obj),))
    if isinstance(task, PairStack):
        return Curriculum((Grasping(task.top), OnTop(task.top, task.bottom)))
    if isinstance(task, TripleStack):
        red, green, blue = ObjectId.RED, ObjectId.GREEN, ObjectId.BLUE
        return Curriculum((Grasping(red), OnTop(red, blue), Grasping(green), OnTop(green, red)))
    raise TypeError(f"unknown task {task!r}")


def decompose_instruction(text: str) -> Curriculum:
    captions: List[Caption] = []
    for task in parse_instruction(text):
        captions.extend(decompose(task))
    return Curriculum.collapsed(captions)


def prompt_template(template: DecompositionPrompt = DEFAULT_PROMPT) -> PromptTemplate:
    examples = "\n\n".join(
        f"Task: {ex.task}\nSub-goals: {json.dumps(ex.subgoals)}" for ex in template.examples
    )
    return PromptTemplate.from_template("{preamble}\n\n{examples}\n\n" + template.query).partial(
        preamble=template.preamble,
        examples=examples,
    )


def render_prompt(template: DecompositionPrompt, task: Task) -> str:
    return prompt_template(template).format(task=task.text)


_LIST_RE = re.compile(r"\[[^\[\]]*\]", re.DOTALL)
_QUOTED_RE = re.compile(r'"([^"]*)"|\'([^\']*)\'')


class CurriculumOutputParser(BaseOutputParser[Curriculum]):
    """Extracts the first bracketed list of quoted captions from a completion."""

    def parse(self, text: str) -> Curriculum:
        found = _LIST_RE.search(text)
        if not found:
            raise OutputParserException(f"no bracketed list in completion: {text[:200]!r}", llm_output=text)
        fragments = [a or b for a, b in _QUOTED_RE.findall(found.group(0))]
        if not fragments:
            raise OutputParserException(f"empty subgoal list: {found.group(0)!r}", llm_output=text)
        captions = []
        for fragment in fragments:
            try:
                captions.append(parse_caption(fragment))
            except GrammarError as e:
                raise OutputParserException(f"subgoal outside the caption grammar: {fragment!r}", llm_output=text) from e
        try:
            return Curriculum(tuple(captions))
        except ValueError as e:
            raise OutputParserException(str(e), llm_output=text) from e

    @property
    def _type(self) -> str:
        return "curriculum_list"


def parse_completion(text: str) -> Curriculum:
    return CurriculumOutputParser().parse(text)


async def external_decompose(
    endpoint: EndpointConfig,
    task: Task,
    *,
    template: DecompositionPrompt = DEFAULT_PROMPT,
    client: Optional[CompletionClient] = None,
) -> Curriculum:
    """Ask the completion endpoint for a curriculum, falling back to ``decompose``."""
    fallback = decompose(task)
    if client is None and not endpoint.enabled:
        logger.warning("no completion endpoint configured; using rule decomposition for %r", task.text)
        return fallback

    owned = client is None
    client = client or CompletionClient(endpoint)
    chain = prompt_template(template) | RunnableLambda(client.complete_prompt) | CurriculumOutputParser()
    try:
        for attempt in range(1, endpoint.retries + 1):
            try:
                curriculum = await chain.ainvoke({"task": task.text})
            except OutputParserException as e:
                logger.warning("completion attempt %d/%d unparseable: %s", attempt, endpoint.retries, e)
                continue
            except RuntimeError as e:
                logger.warning("completion endpoint unavailable (%s); using rule decomposition", e)
                return fallback
            logger.info("external curriculum for %r: %s", task.text, curriculum.texts())
            return curriculum
        logger.warning(
            "no parseable completion after %d attempts; using rule decomposition for %r",
            endpoint.retries, task.text,
        )
        return fallback
    finally:
        if owned:
            await client.close()


def resolve_curriculum(
    task: Task,
    source: CurriculumSource = "rule",
    endpoint: Optional[EndpointConfig] = None,
) -> Curriculum:
    if source == "external":
        return asyncio.run(external_decompose(endpoint or EndpointConfig(), task))
    return decompose(task)
