"""Progress tracker and the runner callback."""

from concurrent.futures import ThreadPoolExecutor

from src.progress import ProgressTracker, ProgressUpdate, StudyStage, create_progress_callback


class TestProgressTracker:
    def test_empty_tracker(self):
        assert ProgressTracker().get_updates_since(0) == ([], 0)

    def test_cursor_returns_only_new_updates(self):
        tracker = ProgressTracker()
        tracker.report(ProgressUpdate(StudyStage.DISPATCH, "s100", "a"))
        tracker.report(ProgressUpdate(StudyStage.LOADFLOW, "s100", "b"))
        updates, cursor = tracker.get_updates_since(0)
        assert [u.message for u in updates] == ["a", "b"]
        assert cursor == 2

        tracker.report(ProgressUpdate(StudyStage.OPF, "s100", "c"))
        updates, cursor = tracker.get_updates_since(cursor)
        assert [u.message for u in updates] == ["c"]
        assert cursor == 3
        assert tracker.get_updates_since(cursor) == ([], 3)

    def test_concurrent_reports_are_all_kept(self):
        tracker = ProgressTracker()
        callback = create_progress_callback(tracker)
        with ThreadPoolExecutor(max_workers=4) as pool:
            for i in range(4):
                pool.submit(lambda i=i: [callback("dispatch", str(k), scenario=f"s{i:03d}") for k in range(50)])
        updates, _ = tracker.get_updates_since(0)
        assert len(updates) == 200
        assert {u.scenario for u in updates} == {"s000", "s001", "s002", "s003"}


class TestProgressUpdate:
    def test_line_names_scenario_and_mode(self):
        update = ProgressUpdate(StudyStage.OPF, "s055", "Period 0 converged", mode="with_storage")
        assert update.line() == "[s055 with_storage] opf: Period 0 converged"
        assert ProgressUpdate(StudyStage.SCENARIO, "s055", "ok").line() == "[s055] scenario: ok"


class TestProgressCallback:
    def test_stage_names_map_to_stages(self):
        tracker = ProgressTracker()
        callback = create_progress_callback(tracker)
        callback("opf", "Period 0 converged", scenario="s055", mode="with_storage")
        (latest,), _ = tracker.get_updates_since(0)
        assert latest.stage is StudyStage.OPF
        assert latest.scenario == "s055"
        assert latest.mode == "with_storage"
        assert not latest.is_complete

    def test_unlabelled_updates_use_the_default_scenario(self):
        tracker = ProgressTracker()
        create_progress_callback(tracker, "study")("reporting", "writing tables")
        (latest,), _ = tracker.get_updates_since(0)
        assert latest.scenario == "study"
        assert latest.stage is StudyStage.REPORTING

    def test_unknown_stage_falls_back_to_initializing(self):
        tracker = ProgressTracker()
        create_progress_callback(tracker)("warming_up", "hello")
        (latest,), _ = tracker.get_updates_since(0)
        assert latest.stage is StudyStage.INITIALIZING

    def test_terminal_stages_complete_the_scenario(self):
        tracker = ProgressTracker()
        callback = create_progress_callback(tracker)
        callback("failed", "boom", scenario="s055", error="InfeasiblePeriodError")
        callback("completed", "done", scenario="s055")
        failed, completed = tracker.get_updates_since(0)[0]
        assert failed.is_complete
        assert failed.error == "InfeasiblePeriodError"
        assert completed.is_complete
