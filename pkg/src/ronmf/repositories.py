"""
Repository classes for storing experiment results.

ExperimentRepository and RepetitionRepository map the two tables;
ResultsStore saves and reassembles whole ResultsRecord objects on top of them.
"""

import json
from datetime import datetime
from typing import Dict, List, Optional, Tuple

from .models import MetricReport, RepetitionResult, ResultsRecord
from .persistence import Database


class ExperimentRepository:
    """Repository for the experiments table."""

    def __init__(self, database: Database):
        """
        Initialize the repository.

        Args:
            database: Database instance for persistence
        """
        self.db = database

    def create(self, record: ResultsRecord, name: str) -> ResultsRecord:
        """
        Insert the experiment row of a record.

        Args:
            record: Record whose id, config and version are stored
            name: Human-readable experiment name

        Returns:
            The record
        """
        with self.db.get_cursor() as cursor:
            self.insert(cursor, record, name)
        return record

    @staticmethod
    def insert(cursor, record: ResultsRecord, name: str):
        """Insert the experiment row through an open cursor, leaving the commit to its owner."""
        cursor.execute("""
            INSERT INTO experiments (id, name, config_json, library_version, created_at)
            VALUES (?, ?, ?, ?, ?)
        """, (
            record.id,
            name,
            json.dumps(record.config, sort_keys=True),
            record.library_version,
            record.created_at.isoformat()
        ))

    def get_by_id(self, experiment_id: str) -> Optional[ResultsRecord]:
        """
        Retrieve an experiment without its repetitions.

        Returns:
            ResultsRecord with an empty methods mapping, or None if not found
        """
        with self.db.get_cursor() as cursor:
            cursor.execute("""
                SELECT id, name, config_json, library_version, created_at
                FROM experiments
                WHERE id = ?
            """, (experiment_id,))
            row = cursor.fetchone()

            if row:
                return self._to_record(row)
            return None

    def get_all(self) -> List[Tuple[str, ResultsRecord]]:
        """
        Retrieve every experiment, newest first.

        Returns:
            List of (name, record) pairs; records carry no repetitions
        """
        with self.db.get_cursor() as cursor:
            cursor.execute("""
                SELECT id, name, config_json, library_version, created_at
                FROM experiments
                ORDER BY created_at DESC
            """)
            return [(row['name'], self._to_record(row)) for row in cursor.fetchall()]

    def delete(self, experiment_id: str) -> bool:
        """
        Delete an experiment and, through the cascade, its repetitions.

        Returns:
            True if a row was deleted, False otherwise
        """
        with self.db.get_cursor() as cursor:
            cursor.execute("DELETE FROM experiments WHERE id = ?", (experiment_id,))
            return cursor.rowcount > 0

    @staticmethod
    def _to_record(row) -> ResultsRecord:
        return ResultsRecord(
            id=row['id'],
            config=json.loads(row['config_json']),
            library_version=row['library_version'],
            created_at=datetime.fromisoformat(row['created_at'])
        )


class RepetitionRepository:
    """Repository for the repetitions table."""

    def __init__(self, database: Database):
        """
        Initialize the repository.

        Args:
            database: Database instance for persistence
        """
        self.db = database

    def create(self, experiment_id: str, method: str, result: RepetitionResult) -> RepetitionResult:
        """
        Insert one method's result for one repetition.

        Raises:
            sqlite3.IntegrityError: If the experiment does not exist or the
                (method, repetition) pair is already stored
        """
        with self.db.get_cursor() as cursor:
            self.insert(cursor, experiment_id, method, result)
        return result

    @staticmethod
    def insert(cursor, experiment_id: str, method: str, result: RepetitionResult):
        """Insert one result row through an open cursor, leaving the commit to its owner."""
        metrics = result.metrics
        if metrics is None:
            scores, confusion = (None, None, None, None), None
        else:
            scores = (metrics.acc, metrics.f1, metrics.nmi, metrics.pur)
            confusion = json.dumps([list(row) for row in metrics.confusion])
        cursor.execute("""
            INSERT INTO repetitions (experiment_id, repetition, seed, method, acc, f1, nmi, pur,
                                     confusion_json, iterations, feasibility, seconds)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        """, (
            experiment_id,
            result.repetition,
            result.seed,
            method,
            *scores,
            confusion,
            result.iterations,
            result.feasibility,
            result.seconds
        ))

    def get_by_experiment_id(self, experiment_id: str) -> Dict[str, List[RepetitionResult]]:
        """
        Retrieve the results of an experiment grouped by method.

        Methods appear in insertion order and results in repetition order.
        """
        with self.db.get_cursor() as cursor:
            cursor.execute("""
                SELECT repetition, seed, method, acc, f1, nmi, pur, confusion_json,
                       iterations, feasibility, seconds
                FROM repetitions
                WHERE experiment_id = ?
                ORDER BY id ASC
            """, (experiment_id,))
            rows = cursor.fetchall()

        methods: Dict[str, List[RepetitionResult]] = {}
        for row in rows:
            metrics = None
            if row['acc'] is not None:
                metrics = MetricReport(
                    acc=row['acc'], f1=row['f1'], nmi=row['nmi'], pur=row['pur'],
                    confusion=tuple(tuple(r) for r in json.loads(row['confusion_json']))
                )
            methods.setdefault(row['method'], []).append(RepetitionResult(
                repetition=row['repetition'],
                seed=row['seed'],
                metrics=metrics,
                iterations=row['iterations'],
                feasibility=row['feasibility'],
                seconds=row['seconds']
            ))
        for results in methods.values():
            results.sort(key=lambda r: r.repetition)
        return methods

    def delete_by_experiment_id(self, experiment_id: str) -> int:
        """
        Delete every repetition of an experiment.

        Returns:
            Number of deleted rows
        """
        with self.db.get_cursor() as cursor:
            cursor.execute("DELETE FROM repetitions WHERE experiment_id = ?", (experiment_id,))
            return cursor.rowcount


class ResultsStore:
    """Save and load complete ResultsRecord objects."""

    def __init__(self, database: Database):
        self.db = database
        self.experiments = ExperimentRepository(database)
        self.repetitions = RepetitionRepository(database)

    def save(self, record: ResultsRecord, name: Optional[str] = None) -> str:
        """
        Store a record with all its repetitions in one transaction.

        Either every row is written or, when an insert fails, none is.

        Returns:
            The record id
        """
        name = name or record.config.get('name') or 'experiment'
        with self.db.get_cursor() as cursor:
            ExperimentRepository.insert(cursor, record, name)
            for method, results in record.methods.items():
                for result in results:
                    RepetitionRepository.insert(cursor, record.id, method, result)
        return record.id

    def load(self, experiment_id: str) -> Optional[ResultsRecord]:
        """Reassemble a stored record, or return None if the id is unknown."""
        record = self.experiments.get_by_id(experiment_id)
        if record is None:
            return None
        record.methods = self.repetitions.get_by_experiment_id(experiment_id)
        return record

    def list(self) -> List[Tuple[str, ResultsRecord]]:
        """(name, record) for every stored experiment, newest first, without repetitions."""
        return self.experiments.get_all()

    def delete(self, experiment_id: str) -> bool:
        return self.experiments.delete(experiment_id)
