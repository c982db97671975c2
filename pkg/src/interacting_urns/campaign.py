# src/interacting_urns/campaign.py

import asyncio
import functools
import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor
from typing import Callable, List, Optional, TypeVar

from . import simulate
from .exceptions import InvalidParameterError
from .models import (
    AIDrawEstimate,
    EstimationMode,
    FixationEstimate,
    FixationTally,
    ModelParams,
    NonconformistTally,
    SingleUrnSampler,
    SingleUrnTally,
    WeightSequence,
)
from .simulate import DEFAULT_DEEP_LEVEL, DEFAULT_DEEP_STEPS, DEFAULT_MAX_STEPS

logger = logging.getLogger(__name__)

T = TypeVar("T")

BATCHES_PER_WORKER = 4


class CampaignService:
    """Runs replica batches concurrently and merges their tallies.

    Batches are contiguous ranges of replica ids. Every replica seeds its own
    stream and tallies merge by addition, so results do not depend on the
    number of workers.
    """

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise InvalidParameterError(f"workers must be positive, got {workers}")
        self.workers = workers
        self._executor: Optional[Executor] = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None

    def batches(self, replicas: int) -> List[range]:
        if replicas < 1:
            raise InvalidParameterError(f"replicas must be positive, got {replicas}")
        size = max(1, math.ceil(replicas / (self.workers * BATCHES_PER_WORKER)))
        return [range(start, min(start + size, replicas)) for start in range(0, replicas, size)]

    async def _gather(self, job: Callable[[range], T], replicas: int, start: T) -> T:
        loop = asyncio.get_running_loop()
        batches = self.batches(replicas)
        logger.info(f"Running {replicas} replicas in {len(batches)} batches on {self.workers} workers")
        results = await asyncio.gather(
            *(loop.run_in_executor(self._executor, job, batch) for batch in batches)
        )
        total = start
        for result in results:
            total = total + result
        logger.debug(f"Merged {len(results)} batches: {total}")
        return total

    async def fixation_tally(
        self,
        params: ModelParams,
        replicas: int,
        seed: int,
        mode: EstimationMode = EstimationMode.BRACKET,
        horizon: Optional[int] = None,
        stop_rule: Optional[simulate.StopRule] = None,
        deep_level: int = DEFAULT_DEEP_LEVEL,
        deep_steps: int = DEFAULT_DEEP_STEPS,
        max_steps: int = DEFAULT_MAX_STEPS,
    ) -> FixationTally:
        job = _bind(
            simulate.fixation_tally,
            params=params,
            seed=seed,
            mode=mode,
            horizon=horizon,
            stop_rule=stop_rule,
            deep_level=deep_level,
            deep_steps=deep_steps,
            max_steps=max_steps,
        )
        return await self._gather(job, replicas, FixationTally())

    async def estimate_fixation(
        self,
        params: ModelParams,
        replicas: int,
        seed: int,
        mode: EstimationMode = EstimationMode.BRACKET,
        horizon: Optional[int] = None,
        deep_level: int = DEFAULT_DEEP_LEVEL,
        deep_steps: int = DEFAULT_DEEP_STEPS,
        max_steps: int = DEFAULT_MAX_STEPS,
    ) -> FixationEstimate:
        """Concurrent counterpart of simulate.estimate_fixation, with the same result."""
        if mode is EstimationMode.RUIN_SHORTCUT:
            simulate.check_shortcut(params)
        tally = await self.fixation_tally(
            params, replicas, seed, mode, horizon,
            deep_level=deep_level, deep_steps=deep_steps, max_steps=max_steps,
        )
        logger.info(f"Fixation tally p={params.p}: {tally}")
        return simulate.summarize_fixation(tally, params, mode, deep_level)

    async def ai_draw_rate(
        self,
        params: ModelParams,
        replicas: int,
        seed: int,
        horizon: Optional[int] = None,
        deep_level: int = DEFAULT_DEEP_LEVEL,
        deep_steps: int = DEFAULT_DEEP_STEPS,
        max_steps: int = DEFAULT_MAX_STEPS,
    ) -> AIDrawEstimate:
        tally = await self.fixation_tally(
            params, replicas, seed, EstimationMode.BRACKET, horizon,
            stop_rule=simulate.StopRule.ADAPTIVE if horizon is None else simulate.StopRule.AT_HORIZON,
            deep_level=deep_level, deep_steps=deep_steps, max_steps=max_steps,
        )
        return simulate.summarize_ai_draws(tally)

    async def nonconformist(
        self,
        urns: int,
        p: float,
        replicas: int,
        seed: int,
        deep_level: int = DEFAULT_DEEP_LEVEL,
        max_steps: int = DEFAULT_MAX_STEPS,
    ) -> NonconformistTally:
        job = _bind(
            simulate.nonconformist_tally,
            urns=urns,
            p=p,
            seed=seed,
            deep_level=deep_level,
            max_steps=max_steps,
        )
        return await self._gather(job, replicas, NonconformistTally.zero(urns))

    async def single_urn(
        self,
        weights: WeightSequence,
        horizon: int,
        replicas: int,
        seed: int,
        sampler: SingleUrnSampler = SingleUrnSampler.RUBIN,
    ) -> SingleUrnTally:
        job = _bind(simulate.single_urn_tally, weights=weights, horizon=horizon, seed=seed, sampler=sampler)
        return await self._gather(job, replicas, SingleUrnTally())

    async def close(self):
        """Shut down the worker processes."""
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    async def __aenter__(self) -> "CampaignService":
        return self

    async def __aexit__(self, *exc) -> None:
        await self.close()


def _bind(function: Callable[..., T], **kwargs) -> Callable[[range], T]:
    """A picklable callable taking only the batch of replica ids."""
    return functools.partial(_call_with_ids, function, kwargs)


def _call_with_ids(function: Callable[..., T], kwargs: dict, replica_ids: range) -> T:
    return function(replica_ids=replica_ids, **kwargs)
