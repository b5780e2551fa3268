from __future__ import annotations

from alembic import op
import sqlalchemy as sa

revision = '0001'
down_revision = None
branch_labels = None
depends_on = None


def upgrade():
    op.create_table(
        'experiment_runs',
        sa.Column('id', sa.Integer, primary_key=True),
        sa.Column('started_at', sa.DateTime(), nullable=False),
        sa.Column('finished_at', sa.DateTime(), nullable=True),
        sa.Column('kind', sa.String(length=32), nullable=False),
        sa.Column('name', sa.String(length=128), nullable=False),
        sa.Column('seed', sa.Integer(), nullable=False),
        sa.Column('config', sa.JSON(), nullable=False),
        sa.Column('checks', sa.JSON(), nullable=True),
        sa.Column('passed', sa.Boolean(), nullable=False, server_default=sa.sql.expression.true()),
        sa.Column('notes', sa.Text(), nullable=True),
    )

    op.create_table(
        'run_records',
        sa.Column('id', sa.Integer, primary_key=True),
        sa.Column('run_id', sa.Integer, sa.ForeignKey('experiment_runs.id', ondelete='CASCADE'), nullable=False),
        sa.Column('n', sa.Integer(), nullable=False),
        sa.Column('c', sa.Float(), nullable=False),
        sa.Column('replica', sa.Integer(), nullable=False),
        sa.Column('seed', sa.Integer(), nullable=False),
        sa.Column('stream', sa.String(length=64), nullable=False),
        sa.Column('c1_frac', sa.Float(), nullable=False),
        sa.Column('c2_frac', sa.Float(), nullable=False),
        sa.Column('nk_digest', sa.String(length=16), nullable=False),
        sa.Column('rho_theory', sa.Float(), nullable=True),
        sa.Column('alpha_theory', sa.Float(), nullable=True),
        sa.Column('converged', sa.Boolean(), nullable=False, server_default=sa.sql.expression.true()),
        sa.Column('delta', sa.Float(), nullable=True),
        sa.Column('mode', sa.String(length=32), nullable=False, server_default=''),
        sa.Column('label', sa.String(length=64), nullable=False, server_default=''),
        sa.Column('value', sa.Float(), nullable=True),
        sa.Column('wall_time', sa.Float(), nullable=False),
    )
    op.create_index('ix_run_records_run_id', 'run_records', ['run_id'])


def downgrade():
    op.drop_index('ix_run_records_run_id', table_name='run_records')
    op.drop_table('run_records')
    op.drop_table('experiment_runs')
