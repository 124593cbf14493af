import datetime
import logging
from unittest import TestCase
from unittest.mock import patch

from stickyflow.logging_filter import ProgressFilter

START = datetime.datetime(2024, 1, 1, 12, 0, 0)


def make_record(msg, *args, **extra):
    record = logging.LogRecord("stickyflow", logging.INFO, __file__, 1, msg, args, None)
    record.__dict__.update(extra)
    return record


class ProgressFilterTests(TestCase):
    def test_plain_records_pass(self):
        self.assertTrue(ProgressFilter().filter(make_record("hello")))

    def test_rate_limit(self):
        log_filter = ProgressFilter()
        extra = {"rate_limit_tag": "progress", "rate_limit_timeout": datetime.timedelta(seconds=5)}
        with patch.object(ProgressFilter, "now", return_value=START):
            self.assertTrue(log_filter.filter(make_record("step %s", 1, **extra)))
            self.assertFalse(log_filter.filter(make_record("step %s", 2, **extra)))
            other = {"rate_limit_tag": "other", "rate_limit_timeout": datetime.timedelta(seconds=5)}
            self.assertTrue(log_filter.filter(make_record("step %s", 3, **other)))
        with patch.object(ProgressFilter, "now", return_value=START + datetime.timedelta(seconds=6)):
            self.assertTrue(log_filter.filter(make_record("step %s", 4, **extra)))
            self.assertFalse(log_filter.filter(make_record("step %s", 5, **extra)))

    def test_channel_dedupe(self):
        log_filter = ProgressFilter()
        self.assertTrue(log_filter.filter(make_record("%s particles", 4, channel="count")))
        self.assertFalse(log_filter.filter(make_record("%s particles", 4, channel="count")))
        self.assertTrue(log_filter.filter(make_record("%s particles", 3, channel="count")))
        self.assertTrue(log_filter.filter(make_record("%s particles", 3, channel="other")))
