// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hiermem/config.hpp"
#include "hiermem/corpus.hpp"
#include "hiermem/embedder.hpp"
#include "hiermem/error.hpp"
#include "hiermem/eval.hpp"
#include "hiermem/finch.hpp"
#include "hiermem/membank.hpp"
#include "hiermem/retrieval.hpp"
#include "hiermem/service.hpp"
#include "hiermem/summarize.hpp"
#include "hiermem/vec.hpp"
#include "hiermem/version.hpp"
