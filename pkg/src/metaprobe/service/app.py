"""HTTP front end: submit jobs, poll status, fetch result files."""

import os
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse

from .. import __version__
from .runner import JobStore, run_selftest
from .schemas import HealthResponse, JobInfo, JobSubmission, SelftestResponse


def create_app(max_workers: int = 2) -> FastAPI:
    store = JobStore(max_workers=max_workers)

    @asynccontextmanager
    async def lifespan(app):
        yield
        store.shutdown()

    app = FastAPI(title="metaprobe", version=__version__, lifespan=lifespan)
    app.state.store = store

    def get_job(job_id: str) -> JobInfo:
        info = store.get(job_id)
        if info is None:
            raise HTTPException(status_code=404,
                                detail=f"no such job: {job_id}")
        return info

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/v1/jobs", response_model=JobInfo, status_code=202)
    def submit(submission: JobSubmission):
        return store.submit(submission.request)

    @app.get("/v1/jobs/{job_id}", response_model=JobInfo)
    def job_status(job_id: str):
        return get_job(job_id)

    @app.get("/v1/jobs/{job_id}/files")
    def job_files(job_id: str):
        info = get_job(job_id)
        return {"job_id": job_id,
                "files": [os.path.basename(p) for p in info.outputs]}

    @app.get("/v1/jobs/{job_id}/files/{name}")
    def job_file(job_id: str, name: str):
        info = get_job(job_id)
        for path in info.outputs:
            if os.path.basename(path) == name:
                return FileResponse(path)
        raise HTTPException(status_code=404,
                            detail=f"job {job_id} has no output {name!r}")

    @app.post("/v1/selftest", response_model=SelftestResponse)
    def selftest():
        return run_selftest()

    return app
