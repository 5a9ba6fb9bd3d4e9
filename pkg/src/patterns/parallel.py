import asyncio
from concurrent.futures import Executor
from typing import Any, Callable, Coroutine, Iterable, List, Optional


async def fan_out_fan_in(coroutines: List[Coroutine]) -> List[Any]:
    """Execute multiple coroutines in parallel and return all results (exceptions included)."""
    return await asyncio.gather(*coroutines, return_exceptions=True)


async def map_in_executor(
    fn: Callable[..., Any], items: Iterable[tuple], executor: Optional[Executor] = None
) -> List[Any]:
    """Run `fn(*item)` for every item on `executor` (default thread pool) and gather the results."""
    loop = asyncio.get_running_loop()
    return await fan_out_fan_in([loop.run_in_executor(executor, fn, *item) for item in items])
