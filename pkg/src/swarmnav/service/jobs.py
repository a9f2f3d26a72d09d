"""In-memory background job registry for long-running training requests."""

from __future__ import annotations

import threading
import traceback
import uuid


class JobRegistry:
    def __init__(self):
        self._jobs = {}
        self._lock = threading.Lock()

    def submit(self, fn, *args, **kwargs):
        job_id = uuid.uuid4().hex[:12]
        with self._lock:
            self._jobs[job_id] = {"state": "queued", "result": None, "error": None}

        def runner():
            with self._lock:
                self._jobs[job_id]["state"] = "running"
            try:
                result = fn(*args, **kwargs)
                with self._lock:
                    self._jobs[job_id].update(state="done", result=result)
            except Exception as e:  # noqa: BLE001 - reported through the API
                with self._lock:
                    self._jobs[job_id].update(
                        state="error", error=f"{type(e).__name__}: {e}")
                traceback.print_exc()

        threading.Thread(target=runner, daemon=True).start()
        return job_id

    def get(self, job_id):
        with self._lock:
            job = self._jobs.get(job_id)
            return dict(job) if job is not None else None
