package org.example.dfs.namenode;

import org.example.dfs.Block;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class Recovery {
    private static final Logger LOG = LoggerFactory.getLogger(Recovery.class);

    public void recoverBlock(Block block, String node) {
        try {
            LOG.info("Starting recovery of " + block + " on " + node);
            commit(block);
        } catch (IllegalStateException e) {
            LOG.info("Restarting node due to timeout " + node);
        }
    }

    void commit(Block block) {
        if (block.getNumBytes() < 0) {
            throw new IllegalStateException("negative length");
        }
        LOG.info("Commit of " + block + " moved replica to FINALIZED");
    }
}
