import datetime
import logging


class ProgressFilter(logging.Filter):
    # pylint: disable=too-few-public-methods

    def __init__(self):
        logging.Filter.__init__(self)
        self.rate_limit_timeouts = {}
        self.last_message = {}

    @staticmethod
    def now():
        return datetime.datetime.now()

    def filter(self, record):
        if "rate_limit_tag" in record.__dict__ and "rate_limit_timeout" in record.__dict__:
            tag = record.__dict__["rate_limit_tag"]
            if tag not in self.rate_limit_timeouts or self.rate_limit_timeouts.get(tag) < self.now():
                self.rate_limit_timeouts[tag] = self.now() + record.__dict__["rate_limit_timeout"]
            else:
                return False
        if "channel" in record.__dict__:
            channel = record.__dict__["channel"]
            message = record.getMessage()
            if self.last_message.get(channel) == message:
                return False
            self.last_message[channel] = message
        return True
