# reference corpus, not part of the test suite
collect_ignore = ["examples"]
