#pragma once

#include "tit/core/benchmark.hpp"
#include "tit/core/error.hpp"
#include "tit/core/hash.hpp"
#include "tit/core/jsonl.hpp"
#include "tit/core/text.hpp"
#include "tit/core/types.hpp"
#include "tit/gateway/cache.hpp"
#include "tit/gateway/gateway.hpp"
#include "tit/gateway/profile.hpp"
#include "tit/gateway/templates.hpp"
#include "tit/gateway/transport.hpp"
#include "tit/metric/cosine.hpp"
#include "tit/metric/pipeline.hpp"
#include "tit/stats/rank_metrics.hpp"
#include "tit/preference/aggregate.hpp"
#include "tit/preference/leaderboard.hpp"
#include "tit/preference/ranking.hpp"
#include "tit/annotation/campaign.hpp"
#include "tit/annotation/server.hpp"
#include "tit/harness/aggregate.hpp"
#include "tit/harness/config.hpp"
#include "tit/harness/evaluate.hpp"
#include "tit/harness/prompt_forge.hpp"
#include "tit/harness/score.hpp"
#include "tit/harness/cli.hpp"
