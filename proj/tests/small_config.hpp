#pragma once

#include <string>

/// A synthetic run small enough for the test suite: about 3k bars, tiny models.
inline std::string small_config_text(unsigned threads = 1) {
  return "seed = 5\n"
         "threads = " + std::to_string(threads) + "\n"
         "data.source = synthetic\n"
         "data.synthetic.n = 3000\n"
         "data.synthetic.start = 2014-06-01T00:00:00Z\n"
         "data.synthetic.planted.count = 2\n"
         "window.lookback = 3\n"
         "arima.fit_bars = 800\n"
         "arima.refit_every = 400\n"
         "arima.p_max = 2\n"
         "arima.q_max = 1\n"
         "split.train = 2014-06-01T00:00:00Z/2014-06-20T00:00:00Z\n"
         "split.validation = 2014-06-20T00:00:00Z/2014-06-25T00:00:00Z\n"
         "split.test = 2014-06-25T00:00:00Z/2014-07-02T00:00:00Z\n"
         "meta.train = 2014-06-25T00:00:00Z/2014-06-28T00:00:00Z\n"
         "meta.validation = 2014-06-28T00:00:00Z/2014-06-30T00:00:00Z\n"
         "meta.test = 2014-06-30T00:00:00Z/2014-07-02T00:00:00Z\n"
         "recap.k = 6\n"
         "stacking.k = 6\n"
         "newton_boost.n_trees = 5\n"
         "newton_boost.max_depth = 3\n"
         "hist_boost.n_trees = 5\n"
         "hist_boost.max_depth = 3\n"
         "forest.n_trees = 5\n"
         "forest.max_depth = 5\n"
         "rnn.hidden = 4\n"
         "rnn.batch_size = 128\n"
         "rnn.learning_rate = 1e-2\n"
         "rnn.max_epochs = 2\n"
         "meta.net.hidden = 4\n"
         "meta.net.max_epochs = 5\n";
}
