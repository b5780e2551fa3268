from __future__ import annotations

from sqlalchemy import Boolean, Float, ForeignKey, Integer, String
from sqlalchemy.orm import Mapped, mapped_column, relationship

from .base import Base


class RunRecordRow(Base):
    __tablename__ = "run_records"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    run_id: Mapped[int] = mapped_column(ForeignKey("experiment_runs.id", ondelete="CASCADE"))
    n: Mapped[int]
    c: Mapped[float]
    replica: Mapped[int]
    seed: Mapped[int]
    stream: Mapped[str] = mapped_column(String(64))
    c1_frac: Mapped[float]
    c2_frac: Mapped[float]
    nk_digest: Mapped[str] = mapped_column(String(16))
    rho_theory: Mapped[float | None] = mapped_column(Float, nullable=True)
    alpha_theory: Mapped[float | None] = mapped_column(Float, nullable=True)
    converged: Mapped[bool] = mapped_column(Boolean, default=True)
    delta: Mapped[float | None] = mapped_column(Float, nullable=True)
    mode: Mapped[str] = mapped_column(String(32), default="")
    label: Mapped[str] = mapped_column(String(64), default="")
    value: Mapped[float | None] = mapped_column(Float, nullable=True)
    wall_time: Mapped[float]

    run = relationship("ExperimentRun", back_populates="records")
